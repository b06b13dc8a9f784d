"""Reference RBF-SVM outputs for test_backend.cpp (scikit-learn SVC defaults)."""
import numpy as np
from sklearn.svm import SVC

rng = np.random.default_rng(7)
centers = np.array([[0.0, 0.0], [1.5, 0.5], [0.5, 1.8]])
X = np.round(np.vstack([c + rng.normal(0, 0.7, (12, 2)) for c in centers]), 3)
y = np.repeat([0, 1, 2], 12)
Q = np.round(rng.uniform(-1.5, 3.0, (24, 2)), 3)

clf = SVC(C=1.0, kernel="rbf", gamma="scale", decision_function_shape="ovo").fit(X, y)
fmt = lambda a: ", ".join(f"{v:.3f}" for v in a.ravel())
print("X =", fmt(X))
print("y =", ", ".join(map(str, y)))
print("Q =", fmt(Q))
print("pred =", ", ".join(map(str, clf.predict(Q))))
print("gamma =", repr(clf._gamma))
print("n_support =", clf.n_support_.tolist())
print("decision =", ", ".join(f"{v:.9f}" for v in clf.decision_function(Q).ravel()))
