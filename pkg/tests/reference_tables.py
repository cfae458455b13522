"""Per-drug mean AUROCs of the six-method drug-response benchmark, with the
mean ranks reported alongside them. Columns follow METHODS."""

METHODS = ["omics_stacking", "moli", "super_felt", "early_integration", "omi_embed", "moma"]
DRUGS = ["Gemcitabine TCGA", "Gemcitabine PDX", "Cisplatin", "Docetaxel", "Erlotinib", "Cetuximab", "Paclitaxel"]

TEST_AUROC = [
    [0.646, 0.628, 0.588, 0.611, 0.628, 0.650],
    [0.651, 0.622, 0.646, 0.586, 0.539, 0.625],
    [0.722, 0.764, 0.753, 0.660, 0.640, 0.714],
    [0.772, 0.792, 0.813, 0.731, 0.803, 0.783],
    [0.754, 0.705, 0.744, 0.671, 0.664, 0.739],
    [0.731, 0.731, 0.768, 0.677, 0.754, 0.751],
    [0.667, 0.596, 0.726, 0.607, 0.740, 0.692],
]
TEST_AUROC_RANKS = [2.86, 3.86, 2.29, 5.29, 3.71, 3.00]

EXTERNAL_AUROC = [
    [0.655, 0.640, 0.618, 0.604, 0.565, 0.473],
    [0.714, 0.614, 0.692, 0.525, 0.657, 0.627],
    [0.644, 0.674, 0.728, 0.604, 0.513, 0.687],
    [0.584, 0.647, 0.588, 0.456, 0.478, 0.581],
    [0.744, 0.722, 0.563, 0.789, 0.633, 0.715],
    [0.575, 0.476, 0.556, 0.470, 0.468, 0.505],
    [0.619, 0.547, 0.527, 0.418, 0.516, 0.573],
]
EXTERNAL_AUROC_RANKS = [1.86, 3.00, 2.86, 4.71, 5.00, 3.57]
