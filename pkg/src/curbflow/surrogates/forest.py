"""Bagged regression trees.

Trees are grown by scikit-learn and exported to flat arrays; prediction
walks those arrays so that a saved model predicts identically without
scikit-learn's pickles.
"""
import math

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .base import Surrogate


class ForestSurrogate(Surrogate):
    family = "RTE"
    defaults = {"n_trees": 100, "min_leaf": 5, "feature_fraction": None}

    def _fit(self, Z, y):
        hp = self.hyper
        p = Z.shape[1]
        m = math.ceil(p / 3) if hp["feature_fraction"] is None else max(
            1, int(round(hp["feature_fraction"] * p)))
        rf = RandomForestRegressor(n_estimators=int(hp["n_trees"]),
                                   min_samples_leaf=int(hp["min_leaf"]),
                                   max_features=m, bootstrap=True,
                                   random_state=self.seed, n_jobs=1)
        rf.fit(Z, y)
        self.trees = []
        for est in rf.estimators_:
            tr = est.tree_
            self.trees.append({
                "left": tr.children_left.astype(np.int64),
                "right": tr.children_right.astype(np.int64),
                "feature": tr.feature.astype(np.int64),
                "threshold": tr.threshold.astype(float),
                "value": tr.value[:, 0, 0].astype(float),
            })

    def _predict(self, Z):
        Zf = Z.astype(np.float32)  # split thresholds were learnt on float32 inputs
        rows = np.arange(len(Zf))
        total = np.zeros(len(Zf))
        for tr in self.trees:
            node = np.zeros(len(Zf), dtype=np.int64)
            while True:
                leaf = tr["left"][node] < 0
                if leaf.all():
                    break
                f = np.where(leaf, 0, tr["feature"][node])
                go_left = Zf[rows, f] <= tr["threshold"][node]
                nxt = np.where(go_left, tr["left"][node], tr["right"][node])
                node = np.where(leaf, node, nxt)
            total += tr["value"][node]
        return total / len(self.trees)

    def _params(self):
        return {"trees": [{k: v.tolist() for k, v in tr.items()} for tr in self.trees]}

    def _load_params(self, p):
        ints = ("left", "right", "feature")
        self.trees = [{k: np.asarray(v, dtype=np.int64 if k in ints else float)
                       for k, v in tr.items()} for tr in p["trees"]]
