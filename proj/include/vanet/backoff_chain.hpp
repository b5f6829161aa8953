#pragma once

// Absorbing chain of the backoff counter. Transient states are counters
// 1..W-1; counter 0 absorbs. Each slot the counter decrements with
// probability p_a (idle sensed) and freezes with p_b = 1 - p_a.

#include <Eigen/Dense>

#include "vanet/types.hpp"

namespace vanet::backoff {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Transient block Q of the transition matrix, indexed by counter - 1.
template <typename Scalar>
Matrix<Scalar> transient_block(int w, Scalar p_a) {
  const int m = w - 1;
  Matrix<Scalar> q = Matrix<Scalar>::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    q(k, k) = Scalar(1) - p_a;
    if (k > 0) q(k, k - 1) = p_a;
  }
  return q;
}

/// Full (W x W) transition matrix over counters 0..W-1, state 0 absorbing.
template <typename Scalar>
Matrix<Scalar> transition_matrix(int w, Scalar p_a) {
  Matrix<Scalar> p = Matrix<Scalar>::Zero(w, w);
  p(0, 0) = Scalar(1);
  for (int k = 1; k < w; ++k) {
    p(k, k) = Scalar(1) - p_a;
    p(k, k - 1) = p_a;
  }
  return p;
}

/// N = (I - Q)^-1. I - Q is lower bidiagonal, so a triangular solve suffices.
template <typename Scalar>
Matrix<Scalar> fundamental_matrix(int w, Scalar p_a) {
  if (w < 1) throw ConfigError("contention window must be >= 1");
  if (!(p_a > Scalar(0))) throw DivergenceError("idle probability is zero; backoff never ends");
  const int m = w - 1;
  Matrix<Scalar> a = Matrix<Scalar>::Identity(m, m) - transient_block<Scalar>(w, p_a);
  Matrix<Scalar> n = Matrix<Scalar>::Identity(m, m);
  a.template triangularView<Eigen::Lower>().solveInPlace(n);
  return n;
}

/// Expected slots to absorption from a counter drawn uniformly on 0..W-1.
template <typename Scalar>
Scalar expected_slots(int w, Scalar p_a) {
  if (w < 1) throw ConfigError("contention window must be >= 1");
  if (!(p_a > Scalar(0))) throw DivergenceError("idle probability is zero; backoff never ends");
  if (w == 1) return Scalar(0);
  return fundamental_matrix<Scalar>(w, p_a).sum() / Scalar(w);
}

/// Mean backoff time t_BO = (1/W) sum_ij N_ij * t_slot.
template <typename Scalar>
Scalar expected_time(int w, Scalar p_a, Scalar t_slot) {
  return expected_slots<Scalar>(w, p_a) * t_slot;
}

/// Geometric closed form (W - 1) / (2 p_a), in slots.
template <typename Scalar>
Scalar closed_form_slots(int w, Scalar p_a) {
  if (!(p_a > Scalar(0))) throw DivergenceError("idle probability is zero; backoff never ends");
  return Scalar(w - 1) / (Scalar(2) * p_a);
}

/// Ready-now probability P_sigma = (1/W^2) sum_ij N_ij + 1/W, capped at 1.
template <typename Scalar>
Scalar ready_probability(int w, Scalar p_a) {
  const Scalar s = w == 1 ? Scalar(0) : fundamental_matrix<Scalar>(w, p_a).sum();
  const Scalar v = s / Scalar(w * w) + Scalar(1) / Scalar(w);
  return v > Scalar(1) ? Scalar(1) : v;
}

}  // namespace vanet::backoff
