#!/usr/bin/env python3
"""Regenerate the CSV fixtures bundled under src/strapsim/data.

Run from the repository root:

    python scripts/build_bundled_data.py

iris.csv holds the real Iris measurements (via scikit-learn, which bundles
the classic file). The other fixtures are deterministic synthetic
stand-ins whose originals cannot be redistributed or fetched here:

* breast_cancer.csv mimics the Wisconsin original diagnostic table --
  699 rows, nine 1..10 graded features, 458 benign / 241 malignant,
  16 missing cells in bare_nuclei written as '?';
* big_mac.csv mimics the 2003 UBS price survey regression table -- 69
  cities, working minutes to buy a Big Mac as the target, nine economic
  indicator features driven by a latent wealth level;
* movie_ratings.csv / movie_metadata.csv mimic a small movie
  recommendation corpus -- 200 users rating genre-structured movies on a
  0.5..5.0 half-step scale, with genre-flavored descriptions and taglines.

Everything is seeded; re-running reproduces identical bytes.
"""

import sys
from pathlib import Path

import numpy as np

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "strapsim" / "data"


def fmt(x) -> str:
    return repr(float(x))


def build_iris() -> None:
    from sklearn.datasets import load_iris

    iris = load_iris()
    lines = ["sepal_length,sepal_width,petal_length,petal_width,species"]
    for row, target in zip(iris.data, iris.target):
        species = iris.target_names[target]
        lines.append(",".join(f"{v:.1f}" for v in row) + f",{species}")
    (DATA_DIR / "iris.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


BC_FEATURES = [
    "clump_thickness",
    "uniformity_cell_size",
    "uniformity_cell_shape",
    "marginal_adhesion",
    "single_epithelial_cell_size",
    "bare_nuclei",
    "bland_chromatin",
    "normal_nucleoli",
    "mitoses",
]

# Correlated feature groups: a row expresses each group's mass through a
# row-specific split across the group's members, so two malignant rows can
# carry the same signal in different (but correlated) columns.
BC_GROUPS = [
    (["clump_thickness", "uniformity_cell_size", "uniformity_cell_shape", "bare_nuclei"], 1.05),
    (["marginal_adhesion", "single_epithelial_cell_size", "bland_chromatin", "normal_nucleoli"], 0.85),
    (["mitoses"], 0.40),
]

BC_NOISE = 0.30
BC_BENIGN_Z = 0.14
BC_MALIGNANT_Z = (0.46, 0.22)
BC_SPLIT_ALPHA = {"benign": 7.0, "malignant": 0.75}


def build_breast_cancer() -> None:
    rng = np.random.default_rng(20240301)
    n_benign, n_malignant = 458, 241
    col = {name: k for k, name in enumerate(BC_FEATURES)}
    rows = []
    for label, count in (("benign", n_benign), ("malignant", n_malignant)):
        for _ in range(count):
            if label == "benign":
                z = abs(rng.normal(0.0, BC_BENIGN_Z))
            else:
                z = max(0.12, rng.normal(*BC_MALIGNANT_Z))
            cells = np.ones(len(BC_FEATURES))
            for members, loading in BC_GROUPS:
                share = rng.dirichlet(np.full(len(members), BC_SPLIT_ALPHA[label]))
                mass = z * loading * len(members)
                for name, frac in zip(members, share):
                    v = mass * frac + abs(rng.normal(0.0, BC_NOISE)) * 0.22
                    cells[col[name]] = 1.0 + 9.0 * min(v, 1.0)
            rows.append(([int(round(c)) for c in cells], label))
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]

    missing = rng.choice(len(rows), size=16, replace=False)
    header = ",".join(BC_FEATURES) + ",class"
    lines = [header]
    for r, (cells, label) in enumerate(rows):
        text = [str(c) for c in cells]
        if r in missing:
            text[col["bare_nuclei"]] = "?"
        lines.append(",".join(text) + f",{label}")
    (DATA_DIR / "breast_cancer.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_big_mac() -> None:
    rng = np.random.default_rng(20240302)
    n = 69
    wealth = np.exp(rng.normal(0.0, 0.55, size=n))
    wealth /= wealth.mean()

    big_mac = np.clip(13.0 + (48.0 / wealth) * np.exp(rng.normal(0.0, 0.12, size=n)), 15, 200)
    # food staples share a latent cost split row by row between bread and rice
    food_cost = (24.0 / wealth) * np.exp(rng.normal(0.0, 0.15, size=n))
    split = rng.beta(2.2, 2.2, size=n)
    bread = 4.0 + 2.0 * food_cost * split
    rice = 3.0 + 2.0 * food_cost * (1.0 - split)
    food_index = np.clip(30.0 + 45.0 * np.log1p(wealth) + rng.normal(0, 4, n), 15, 120)
    # housing/transit cost expressed more through one channel or the other
    urban = 1.0 + 0.9 * wealth * np.exp(rng.normal(0.0, 0.15, size=n))
    split2 = rng.beta(2.2, 2.2, size=n)
    bus = 0.1 + 1.4 * urban * split2
    apt = 80.0 + 850.0 * urban * (1.0 - split2)
    teach_gi = np.clip(2.0 + 30.0 * wealth * np.exp(rng.normal(0, 0.15, n)), 1.0, 110.0)
    tax_rate = np.clip(6.0 + 13.0 * np.log1p(wealth) + rng.normal(0, 3.0, n), 0.5, 55.0)
    teach_ni = teach_gi * (1.0 - tax_rate / 100.0)
    teach_hours = np.clip(rng.normal(1780, 210, n), 1250, 2400)

    header = "city,bread,rice,food_index,bus,apt,teach_gi,teach_ni,tax_rate,teach_hours,big_mac"
    lines = [header]
    for k in range(n):
        cells = [
            f"city{k + 1:02d}",
            f"{bread[k]:.1f}",
            f"{rice[k]:.1f}",
            f"{food_index[k]:.1f}",
            f"{bus[k]:.2f}",
            f"{apt[k]:.0f}",
            f"{teach_gi[k]:.1f}",
            f"{teach_ni[k]:.1f}",
            f"{tax_rate[k]:.1f}",
            f"{teach_hours[k]:.0f}",
            f"{big_mac[k]:.1f}",
        ]
        lines.append(",".join(cells))
    (DATA_DIR / "big_mac.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


GENRES = [
    "noir", "heist", "space", "western", "romance", "horror", "sports", "spy",
]

GENRE_TERMS = {
    "noir": "detective rain shadow smoke alley betrayal witness motive verdict gun "
            "confession stakeout precinct ledger alibi fedora dame racket informant midnight",
    "heist": "vault crew blueprint getaway diamond safecracker score plan double cross "
             "mask tunnel casino insider loot drill alarm decoy driver",
    "space": "orbit colony starship nebula signal gravity drift beacon cargo airlock "
             "engine asteroid relay horizon probe dome terraform voyage stasis",
    "western": "frontier saloon ranch outlaw sheriff dust canyon rail herd bounty "
               "revolver homestead creek wagon brand posse territory silver spur",
    "romance": "letter summer promise wedding stranger dance cafe postcard garden "
               "reunion vineyard lighthouse violin balcony farewell spark serenade vow",
    "horror": "cellar ritual whisper mirror seance relic fog crypt lantern hollow "
              "marionette covenant attic omen vigil effigy woods hex",
    "sports": "season champion locker underdog coach rally trophy rookie stadium "
              "comeback playoff captain streak scout bench anthem rival final",
    "spy": "cipher embassy courier defector dossier handler safehouse wire asset "
           "extraction cover protocol microfilm liaison chase border decode mole",
}

COMMON_TERMS = (
    "story family city night journey secret truth life heart dream world time "
    "friend enemy past future fate chance memory silence courage shadow light hope "
    "fear loss love power trust money road home war peace game plan team fire water"
).split()


def _sentence(rng, genre_pool, mix, length):
    words = []
    for _ in range(length):
        if rng.random() < mix:
            words.append(genre_pool[rng.integers(len(genre_pool))])
        else:
            words.append(COMMON_TERMS[rng.integers(len(COMMON_TERMS))])
    return " ".join(words)


def build_movies() -> None:
    rng = np.random.default_rng(20240303)
    n_movies, n_users = 340, 200

    genre_pools = {g: GENRE_TERMS[g].split() for g in GENRES}
    movie_rows = []
    movie_genre = []
    movie_quality = []
    for m in range(n_movies):
        g = GENRES[m % len(GENRES)]
        movie_genre.append(g)
        movie_quality.append(rng.normal(0.0, 0.32))
        desc = _sentence(rng, genre_pools[g], 0.55, int(rng.integers(20, 34)))
        tagline = _sentence(rng, genre_pools[g], 0.6, int(rng.integers(4, 9)))
        movie_rows.append((f"m{m + 1:04d}", desc, tagline))

    popularity = (np.arange(1, n_movies + 1) / n_movies) ** 1.9
    popularity = popularity[rng.permutation(n_movies)]
    genre_index = {g: k for k, g in enumerate(GENRES)}
    movie_quality = np.array(movie_quality)

    rating_lines = ["user_id,movie_id,rating"]
    for u in range(n_users):
        pref = rng.dirichlet(np.full(len(GENRES), 0.45))
        user_bias = rng.normal(0.0, 0.30)
        n_ratings = int(np.clip(rng.lognormal(3.6, 0.45), 14, 170))
        probs = popularity * np.array([pref[genre_index[g]] + 0.06 for g in movie_genre])
        probs = probs / probs.sum()
        chosen = rng.choice(n_movies, size=min(n_ratings, n_movies), replace=False, p=probs)
        for m in chosen:
            affinity = 1.1 * (pref[genre_index[movie_genre[m]]] - 1.0 / len(GENRES))
            raw = 3.45 + user_bias + movie_quality[m] + affinity + rng.normal(0.0, 0.78)
            rating = float(np.clip(np.round(raw * 2.0) / 2.0, 0.5, 5.0))
            rating_lines.append(f"u{u + 1:03d},m{m + 1:04d},{rating}")

    meta_lines = ["movie_id,description,tagline"]
    for mid, desc, tagline in movie_rows:
        meta_lines.append(f"{mid},{desc},{tagline}")

    (DATA_DIR / "movie_ratings.csv").write_text("\n".join(rating_lines) + "\n", encoding="utf-8")
    (DATA_DIR / "movie_metadata.csv").write_text("\n".join(meta_lines) + "\n", encoding="utf-8")


def main() -> int:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    build_iris()
    build_breast_cancer()
    build_big_mac()
    build_movies()
    for f in sorted(DATA_DIR.glob("*.csv")):
        print(f"{f.name}: {f.stat().st_size} bytes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
