"""Online adaptation pipeline: per-batch geometric alignment, semantic
projection, and a standard TTA objective, each driving Adam updates of the
encoder's normalization-affine parameters.

The orchestrator is an sklearn-style estimator: ``fit`` runs the one-off
textual-subspace initialization, ``partial_fit``/``predict`` consume test
batches online. Two independent Adam states back the alignment and TTA
updates. No TTA gradient ever reaches the covariance tracker: the tracker is
updated once per batch from the pre-alignment features and then treated as a
constant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .encoder import ToyEncoder
from .exceptions import DimensionMismatch, NumericalBlowup
from .linalg import sym_eig
from .objectives import entropy_objective, icv_objective
from .optim import AdamState, adam_step
from .predictor import TextAnchorSet, project
from .subspace import (
    CovarianceTracker,
    Subspace,
    chordal_loss,
    chordal_loss_grad,
    ema_update,
    extract_subspace,
    subspace_angles,
    text_covariance,
)
from .validation import check_matrix

_ZERO_NORM = 1e-12
OBJECTIVES = ("entropy", "icv")


@dataclass
class StepReport:
    step: int
    segment: str
    align_loss_before: float
    align_loss_after: float
    tta_loss: float
    accuracy: float  # nan when labels unavailable
    mean_concentration: float
    max_principal_angle_deg: float
    align_skipped: bool = False
    tta_skipped: bool = False
    n_no_signal: int = 0
    degenerate_gap: bool = False


class SubspaceTTA(BaseEstimator):
    """Online test-time adapter over a frozen-tail toy encoder.

    Parameters mirror the pipeline's knobs: subspace ``rank`` (default
    min(C, 64)), covariance momentum ``alpha``, alignment Adam ``lr`` and TTA
    Adam ``tta_lr`` (defaults to ``lr`` when None), steps per stage, the TTA
    ``objective`` ("entropy" or "icv"), softmax ``temperature``, and the two
    ablation switches ``align`` / ``project``. With both switches off the
    pipeline degenerates to plain zero-shot prediction and performs no
    parameter updates at all.

    The alignment stage updates only the per-coordinate scale ``gamma``. The
    shared bias ``beta`` is deliberately excluded there: a bias shifts every
    sample by the same vector, and the cheapest way to shrink the subspace
    loss with it is to push that common vector into the textual span, which
    aligns the covariance while collapsing class separation. ``beta`` remains
    trainable through the TTA objective, which does observe class structure.
    """

    def __init__(self, rank=None, alpha=0.5, lr=0.02, tta_lr=0.01,
                 align_steps=3, tta_steps=2, objective="icv", temperature=0.01,
                 align=True, project=True, seed=0):
        self.rank = rank
        self.alpha = alpha
        self.lr = lr
        self.tta_lr = tta_lr
        self.align_steps = align_steps
        self.tta_steps = tta_steps
        self.objective = objective
        self.temperature = temperature
        self.align = align
        self.project = project
        self.seed = seed

    # -- lifecycle -----------------------------------------------------------

    def fit(self, anchors, class_names=None):
        """Textual subspace initialization from the class anchors."""
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if isinstance(anchors, TextAnchorSet):
            self.anchors_ = anchors
        else:
            self.anchors_ = TextAnchorSet.from_matrix(anchors, class_names)
        d = self.anchors_.dim
        c = self.anchors_.n_classes
        self.rank_ = int(self.rank) if self.rank is not None else min(c, 64)
        if not 1 <= self.rank_ <= d:
            raise ValueError(f"rank {self.rank_} outside [1, {d}]")
        self.n_features_in_ = d
        self.sigma_text_ = text_covariance(self.anchors_.anchors)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.bt_ = extract_subspace(self.sigma_text_, self.rank_)
        self._init_state()
        self.step_count_ = 0
        return self

    def _init_state(self):
        d = self.n_features_in_
        self.encoder_ = ToyEncoder(dim=d)
        self.tracker_ = CovarianceTracker(sigma=self.sigma_text_.copy(),
                                          alpha=float(self.alpha),
                                          initialized_from="TextPrior")
        self.adam_align_ = AdamState({"gamma": (d,)}, lr=float(self.lr))
        tta_lr = float(self.lr if self.tta_lr is None else self.tta_lr)
        self.adam_tta_ = AdamState({"gamma": (d,), "beta": (d,)}, lr=tta_lr)

    def reset(self):
        """Restore the post-``fit`` state (used between corruption segments)."""
        self._check_fitted()
        self._init_state()
        return self

    def _check_fitted(self):
        if not hasattr(self, "bt_"):
            raise RuntimeError("call fit(anchors) before adapting")

    @property
    def eval_only_(self) -> bool:
        return not self.align and not self.project

    # -- per-batch pipeline --------------------------------------------------

    def adapt_batch(self, X, labels=None, segment="stream"):
        """Run the three-step pipeline on one raw batch.

        Returns ``(class_indices, StepReport)``. A numerically blown-up stage
        is skipped for the batch (recorded in the report); the stream
        continues.
        """
        self._check_fitted()
        X = check_matrix(X, "raw batch")
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"batch dim {X.shape[1]} != fitted dim {self.n_features_in_}"
            )
        enc = self.encoder_
        alpha = float(self.alpha)
        r = self.rank_
        eval_only = self.eval_only_

        # Covariance EMA + subspace extraction from pre-alignment features.
        v = enc.forward(X).embeddings
        sigma_prev = self.tracker_.sigma
        tracker_new = ema_update(self.tracker_, v)
        eig = sym_eig(tracker_new.sigma)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bv = extract_subspace(tracker_new.sigma, r, eig=eig)
        loss_before = chordal_loss(self.bt_, bv)

        # Step 1: geometric alignment.
        align_skipped = False
        if self.align and not eval_only:
            for _ in range(int(self.align_steps)):
                try:
                    ag = chordal_loss_grad(self.bt_, eig, v, alpha, r)
                except NumericalBlowup:
                    align_skipped = True
                    break
                pg = enc.backward(X, ag.d_loss_d_batch)
                deltas = adam_step(self.adam_align_, {"gamma": pg.d_gamma})
                if deltas is None:
                    align_skipped = True
                    break
                enc.apply_update(deltas["gamma"], np.zeros_like(enc.beta))
        self.tracker_ = tracker_new  # history never sees post-alignment features

        # Step 2: re-encode and project onto the textual subspace.
        v_tilde = enc.forward(X).embeddings
        loss_after = self._hypothetical_loss(sigma_prev, v_tilde, loss_before)
        v_proj = project(v_tilde, self.bt_) if self.project else v_tilde

        # Step 3: standard TTA objective on the purified features.
        tta_loss = float("nan")
        tta_skipped = False
        if not eval_only:
            for _ in range(int(self.tta_steps)):
                tta_loss, grad_v = self._tta_gradient(v_tilde)
                if grad_v is None:
                    tta_skipped = True
                    break
                pg = enc.backward(X, grad_v)
                deltas = adam_step(self.adam_tta_, {"gamma": pg.d_gamma, "beta": pg.d_beta})
                if deltas is None:
                    tta_skipped = True
                    break
                enc.apply_update(deltas["gamma"], deltas["beta"])
            if int(self.tta_steps) > 0 and not tta_skipped:
                v_final = enc.forward(X).embeddings
            else:
                v_final = v_tilde
        else:
            v_final = v_tilde

        # Final prediction on (projected) features.
        v_final_proj = project(v_final, self.bt_) if self.project else v_final
        preds, n_no_signal = self._batch_predict(v_final_proj)

        accuracy = float("nan")
        if labels is not None:
            labels = np.asarray(labels)
            accuracy = float(np.mean(labels == preds))
        conc = self._mean_concentration(v_final)
        angles = subspace_angles(self.bt_, bv)
        self.step_count_ += 1
        report = StepReport(
            step=self.step_count_,
            segment=segment,
            align_loss_before=loss_before,
            align_loss_after=loss_after,
            tta_loss=tta_loss,
            accuracy=accuracy,
            mean_concentration=conc,
            max_principal_angle_deg=float(np.rad2deg(angles[-1])),
            align_skipped=align_skipped,
            tta_skipped=tta_skipped,
            n_no_signal=n_no_signal,
            degenerate_gap=bv.degenerate_gap,
        )
        return preds, report

    def partial_fit(self, X, y=None):
        self.adapt_batch(X, labels=y)
        return self

    def predict(self, X):
        """Adapt on the batch, then return its class predictions."""
        preds, _ = self.adapt_batch(X)
        return preds

    # -- internals -----------------------------------------------------------

    def _hypothetical_loss(self, sigma_prev, v_tilde, fallback) -> float:
        """Alignment loss the batch would have produced post-update.

        Diagnostic only: the EMA this measures is never committed.
        """
        try:
            sigma_hyp = (1.0 - self.alpha) * sigma_prev + self.alpha * (v_tilde.T @ v_tilde)
            sigma_hyp = 0.5 * (sigma_hyp + sigma_hyp.T)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                bv_hyp = extract_subspace(sigma_hyp, self.rank_)
            return chordal_loss(self.bt_, bv_hyp)
        except Exception:
            return fallback

    def _normalize_rows(self, m):
        norms = np.linalg.norm(m, axis=1)
        valid = norms >= _ZERO_NORM
        out = np.zeros_like(m)
        out[valid] = m[valid] / norms[valid][:, None]
        return out, norms, valid

    def _batch_predict(self, v_proj):
        v_hat, _, valid = self._normalize_rows(v_proj)
        scores = v_hat @ self.anchors_.anchors.T
        preds = np.argmax(scores, axis=1)
        preds[~valid] = 0  # uniform fallback, lowest-index convention
        return preds.astype(np.int64), int(np.sum(~valid))

    def _tta_gradient(self, v_tilde):
        """Objective value and its gradient w.r.t. the re-encoded features.

        Chains through the (constant) projection, row L2 normalization, and
        the anchor similarity head. Returns (loss, None) when the gradient
        comes out non-finite.
        """
        bt = self.bt_
        anchors = self.anchors_.anchors
        tau = float(self.temperature)
        v_proj = project(v_tilde, bt) if self.project else v_tilde
        v_hat, norms, valid = self._normalize_rows(v_proj)
        if not np.any(valid):
            return float("nan"), None
        vh = v_hat[valid]
        if self.objective == "entropy":
            logits = (vh @ anchors.T) / tau
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            probs = e / e.sum(axis=1, keepdims=True)
            loss, d_logits = entropy_objective(probs)
            d_vhat = (d_logits / tau) @ anchors
        else:
            pseudo = np.argmax(vh @ anchors.T, axis=1)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                loss, d_vhat = icv_objective(vh, pseudo, self.anchors_.n_classes)
        # Through row normalization: (I - v v^T) / ||row||.
        d_proj = np.zeros_like(v_proj)
        d_proj[valid] = (d_vhat - np.sum(d_vhat * vh, axis=1, keepdims=True) * vh) \
            / norms[valid][:, None]
        grad = project(d_proj, bt) if self.project else d_proj
        if not np.all(np.isfinite(grad)):
            return loss, None
        return loss, grad

    def _mean_concentration(self, v) -> float:
        norms_sq = np.sum(v * v, axis=1)
        in_span_sq = np.sum((v @ self.bt_.basis.T) ** 2, axis=1)
        ok = norms_sq >= _ZERO_NORM**2
        if not np.any(ok):
            return float("nan")
        return float(np.mean(np.clip(in_span_sq[ok] / norms_sq[ok], 0.0, 1.0)))


def run_stream(anchors, segments, model: SubspaceTTA | None = None,
               reset_between_segments: bool = True, **params):
    """Drive a SubspaceTTA model over named corruption segments.

    ``segments`` is an iterable of ``(name, batches)`` where ``batches``
    yields ``(raw_batch, labels_or_None)``. Returns ``(summary, reports)``;
    the summary aggregates accuracy over all labeled batches plus the final
    ten of the stream.
    """
    if model is None:
        model = SubspaceTTA(**params)
    model.fit(anchors)
    reports: list[StepReport] = []
    first = True
    for name, batches in segments:
        if not first and reset_between_segments:
            model.reset()
        first = False
        for batch, labels in batches:
            _, report = model.adapt_batch(batch, labels=labels, segment=str(name))
            reports.append(report)
    accs = [rep.accuracy for rep in reports if not np.isnan(rep.accuracy)]
    summary = {
        "n_batches": len(reports),
        "mean_accuracy": float(np.mean(accs)) if accs else float("nan"),
        "final10_accuracy": float(np.mean(accs[-10:])) if accs else float("nan"),
        "first10_align_loss": float(np.mean([r.align_loss_before for r in reports[:10]]))
        if reports else float("nan"),
        "final10_align_loss": float(np.mean([r.align_loss_before for r in reports[-10:]]))
        if reports else float("nan"),
    }
    return summary, reports
