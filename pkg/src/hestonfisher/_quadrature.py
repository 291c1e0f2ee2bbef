"""Vectorised adaptive Simpson quadrature."""
import numpy as np

from .exceptions import IntegrationError


def adaptive_simpson(func, a, b, tol, *, initial_panels=64, max_evaluations=1 << 21):
    """Integrate a vectorised real function over ``[a, b]``.

    All panels that still need refinement are bisected together, so ``func`` is
    called once per refinement level with every new abscissa.  A panel is
    accepted once the two-half Simpson estimate differs from the whole-panel
    estimate by less than ``15 * tol * width / (b - a)``; the accepted value
    carries the Richardson correction.

    Returns ``(value, error_estimate)``.  Raises ``IntegrationError`` carrying
    the partial estimate when the evaluation budget is exhausted.
    """
    if b <= a:
        return 0.0, 0.0
    edges = np.linspace(a, b, initial_panels + 1)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    values = func(np.concatenate([edges, mid]))
    fl, fr = values[:initial_panels], values[1:initial_panels + 1]
    fm = values[initial_panels + 1:]
    whole = (hi - lo) / 6.0 * (fl + 4.0 * fm + fr)
    evaluations = values.size

    width = b - a
    total = 0.0
    error = 0.0
    while lo.size:
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        both = func(np.concatenate([lm, rm]))
        evaluations += both.size
        flm, frm = both[:lo.size], both[lo.size:]
        left = (mid - lo) / 6.0 * (fl + 4.0 * flm + fm)
        right = (hi - mid) / 6.0 * (fm + 4.0 * frm + fr)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * tol * (hi - lo) / width
        total += float(np.sum((left + right + delta / 15.0)[done]))
        error += float(np.sum(np.abs(delta[done]))) / 15.0

        keep = ~done
        if not keep.any():
            break
        if evaluations + 4 * int(keep.sum()) > max_evaluations:
            partial = total + float(np.sum((left + right)[keep]))
            raise IntegrationError(
                f"adaptive Simpson did not reach tol={tol:g} on [{a:g}, {b:g}] "
                f"within {max_evaluations} evaluations",
                partial=partial,
                error_estimate=error + float(np.sum(np.abs(delta[keep]))) / 15.0,
            )
        lo, mid, hi = (
            np.concatenate([lo[keep], mid[keep]]),
            np.concatenate([lm[keep], rm[keep]]),
            np.concatenate([mid[keep], hi[keep]]),
        )
        fl, fm, fr = (
            np.concatenate([fl[keep], fm[keep]]),
            np.concatenate([flm[keep], frm[keep]]),
            np.concatenate([fm[keep], fr[keep]]),
        )
        whole = np.concatenate([left[keep], right[keep]])
    return total, error


def integrate_to_infinity(func, phi_max, tol, *, rel_stop=1e-12, max_doublings=12,
                          initial_panels=64, max_evaluations=1 << 21):
    """Integrate ``func`` over ``[0, inf)`` by doubling the truncation bound.

    Integration proceeds over ``[0, phi_max]``, then ``[phi_max, 2 phi_max]`` and
    so on until the newest piece contributes less than ``rel_stop`` of the
    running total (or less than its share of ``tol`` in absolute terms).
    """
    piece_tol = 0.5 * tol
    total, error = adaptive_simpson(func, 0.0, phi_max, piece_tol,
                                    initial_panels=initial_panels,
                                    max_evaluations=max_evaluations)
    lo, hi = phi_max, 2.0 * phi_max
    for _ in range(max_doublings):
        piece_tol *= 0.5
        try:
            piece, piece_err = adaptive_simpson(func, lo, hi, piece_tol,
                                                initial_panels=initial_panels,
                                                max_evaluations=max_evaluations)
        except IntegrationError as exc:
            raise IntegrationError(str(exc), partial=total + (exc.partial or 0.0),
                                   error_estimate=exc.error_estimate) from exc
        total += piece
        error += piece_err
        if abs(piece) < rel_stop * abs(total) or abs(piece) < piece_tol:
            return total, error
        lo, hi = hi, 2.0 * hi
    raise IntegrationError(
        f"integrand tail still significant at phi={lo:g} after {max_doublings} doublings",
        partial=total, error_estimate=error)
