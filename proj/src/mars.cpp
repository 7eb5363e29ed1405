#include "marsnet/mars.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include "marsnet/parallel.hpp"

namespace marsnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Candidates whose GCV values differ by less than this (relative) slack are
// treated as tied and resolved by (dimension, knot, direction) order. The
// slack keeps the selection stable across algebraically equivalent scoring
// routes: full refits, incremental updates, and the brute-force test oracle.
constexpr double kTieRel = 1e-12;

double tie_slack(double g) { return kTieRel * (1.0 + std::abs(g)); }

using KnotSet = std::set<std::pair<int, double>>;

// A reflection-pair candidate: both hinge directions at (dim, knot).
struct Candidate {
  int dim = 0;
  double knot = 0.0;
};

struct CandidateScore {
  double gcv = kInf;
  double rss = kInf;
  double c = 0.0;
  bool valid = false;
};

struct ScanContext {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  const Eigen::MatrixXd& basis;    // n x (M+1), column 0 is the intercept
  const Eigen::MatrixXd& basis_t;  // (M+2) x n, basis rows transposed with y appended
  double penalty = 0.0;
  int model_size = 0;   // M
  int knot_count = 0;   // distinct (dim, knot) pairs in the current model
};

// Cholesky with diagonal pivoting and dependent-column dropping. The basis
// routinely contains columns that are exact linear combinations of earlier
// ones (a reflected half whose dimension already carries a knot, or a hinge
// anchored at a column extreme); those drop out of the factor and get a zero
// coefficient, matching the minimum-norm solution.
struct PivotedChol {
  Eigen::MatrixXd work;               // permuted copy; leading rank x rank block holds L
  std::vector<Eigen::Index> pivots;   // selected column indices, factor order
  Eigen::Index rank = 0;

  bool factor(const Eigen::MatrixXd& a, double rel_tol) {
    const Eigen::Index p = a.rows();
    work = a;
    pivots.resize(static_cast<std::size_t>(p));
    std::iota(pivots.begin(), pivots.end(), Eigen::Index{0});
    rank = 0;
    const double dmax = a.diagonal().maxCoeff();
    if (!(dmax > 0.0)) {
      pivots.clear();
      return false;
    }
    const double tol = rel_tol * dmax;

    for (Eigen::Index k = 0; k < p; ++k) {
      Eigen::Index jmax = k;
      for (Eigen::Index j = k + 1; j < p; ++j) {
        if (work(j, j) > work(jmax, jmax)) jmax = j;
      }
      if (!(work(jmax, jmax) > tol)) break;
      if (jmax != k) {
        work.row(k).swap(work.row(jmax));
        work.col(k).swap(work.col(jmax));
        std::swap(pivots[static_cast<std::size_t>(k)], pivots[static_cast<std::size_t>(jmax)]);
      }
      const double piv = std::sqrt(work(k, k));
      work(k, k) = piv;
      if (k + 1 < p) {
        const Eigen::Index t = p - k - 1;
        work.col(k).tail(t) /= piv;
        // Full-column update keeps the trailing block symmetric so the
        // row/column pivot swaps stay valid.
        for (Eigen::Index j = k + 1; j < p; ++j) {
          work.col(j).tail(t).noalias() -= work(j, k) * work.col(k).tail(t);
        }
      }
      ++rank;
    }
    pivots.resize(static_cast<std::size_t>(rank));
    return rank > 0;
  }

  // Solves on the selected subspace; rhs rows must already be gathered in
  // pivot order.
  template <typename Rhs>
  Eigen::MatrixXd solve(const Rhs& rhs) const {
    Eigen::MatrixXd z = rhs;
    work.topLeftCorner(rank, rank).triangularView<Eigen::Lower>().solveInPlace(z);
    work.topLeftCorner(rank, rank).triangularView<Eigen::Lower>().transpose().solveInPlace(z);
    return z;
  }
};

Eigen::VectorXd hinge_column(const Eigen::MatrixXd& X, int dim, double knot,
                             HingeDirection direction) {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd col(n);
  if (direction == HingeDirection::Positive) {
    for (Eigen::Index i = 0; i < n; ++i) col[i] = ramp(X(i, dim) - knot);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) col[i] = ramp(knot - X(i, dim));
  }
  return col;
}

double gcv_or_inf(double rss, double c, Eigen::Index n) {
  const double denom = 1.0 - c / static_cast<double>(n);
  if (denom <= 0.0) return kInf;
  return rss / (denom * denom);
}

// Scores one reflection pair by a from-scratch least-squares refit of the
// whole design. This is the reference scorer; the incremental scorer below
// must agree with it.
CandidateScore score_one_full(const ScanContext& ctx, const Candidate& cand, int knots_after) {
  const Eigen::Index n = ctx.X.rows();
  CandidateScore score;
  score.c = effective_params(ctx.model_size + 2, knots_after, ctx.penalty);
  if (score.c >= static_cast<double>(n)) return score;

  Eigen::MatrixXd design(n, ctx.basis.cols() + 2);
  design.leftCols(ctx.basis.cols()) = ctx.basis;
  design.col(ctx.basis.cols()) = hinge_column(ctx.X, cand.dim, cand.knot, HingeDirection::Positive);
  design.col(ctx.basis.cols() + 1) =
      hinge_column(ctx.X, cand.dim, cand.knot, HingeDirection::Negative);

  const LeastSquaresResult lsq = least_squares(design, ctx.y);
  score.rss = lsq.rss;
  score.gcv = gcv_or_inf(score.rss, score.c, n);
  score.valid = std::isfinite(score.gcv);
  return score;
}

void scan_full_serial(const ScanContext& ctx, const std::vector<Candidate>& cands,
                      const std::vector<int>& knots_after, std::vector<CandidateScore>& scores) {
  for (std::size_t i = 0; i < cands.size(); ++i) {
    scores[i] = score_one_full(ctx, cands[i], knots_after[i]);
  }
}

void scan_full_parallel(const ScanContext& ctx, const std::vector<Candidate>& cands,
                        const std::vector<int>& knots_after, std::vector<CandidateScore>& scores) {
  const int threads = max_threads();
  const auto count = static_cast<std::int64_t>(cands.size());
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads)
  for (std::int64_t i = 0; i < count; ++i) {
    scores[static_cast<std::size_t>(i)] =
        score_one_full(ctx, cands[static_cast<std::size_t>(i)], knots_after[static_cast<std::size_t>(i)]);
  }
}

// ----- incremental (sweep) scorer -------------------------------------------
//
// For a fixed dimension, the hinge columns at consecutive knots differ only
// through samples entering the active half, so all inner products with the
// current basis and the targets update in amortized O(n (M+2)) per dimension.
// Each candidate is then scored through bordered normal equations on the
// cached Gram matrix. Ill-conditioned candidates fall back to the reference
// scorer.

struct FastState {
  Eigen::MatrixXd gram;   // (M+1) x (M+1), basis' * basis
  Eigen::VectorXd rhs;    // basis' * y
  double yy = 0.0;
  PivotedChol chol;       // factor over the independent columns, shared by all candidates
  Eigen::VectorXd beta0;  // solution over chol.pivots
  double base_rss = 0.0;  // rss of the current model
  bool usable = false;    // factor healthy; otherwise fall back per candidate
};

void refresh_fast_state(FastState& state) {
  state.usable = false;
  if (!state.chol.factor(state.gram, 1e-12)) return;
  Eigen::VectorXd r(state.chol.rank);
  for (Eigen::Index i = 0; i < state.chol.rank; ++i) {
    r[i] = state.rhs[state.chol.pivots[static_cast<std::size_t>(i)]];
  }
  state.beta0 = state.chol.solve(r);
  if (!state.beta0.allFinite()) return;
  state.base_rss = std::max(state.yy - r.dot(state.beta0), 0.0);
  state.usable = true;
}

struct DimSweep {
  // Per candidate knot (ascending): inner products of the hinge column with
  // [basis | y], the column's squared norm, a magnitude reference for the
  // cancellation guard, and the active-sample count.
  Eigen::MatrixXd dots;  // (M+2) x K
  Eigen::VectorXd sq;    // K
  Eigen::VectorXd ref;   // K
  std::vector<Eigen::Index> active;
};

void sweep_dimension(const ScanContext& ctx, const std::vector<Eigen::Index>& order_asc,
                     const std::vector<double>& knots, HingeDirection direction, int dim,
                     DimSweep& out) {
  const Eigen::Index n = ctx.X.rows();
  const Eigen::Index m1 = ctx.basis.cols();
  const auto K = static_cast<Eigen::Index>(knots.size());
  out.dots.resize(m1 + 1, K);
  out.sq.resize(K);
  out.ref.resize(K);
  out.active.assign(knots.size(), 0);

  Eigen::VectorXd s = Eigen::VectorXd::Zero(m1 + 1);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(m1 + 1);
  double cnt = 0.0, sx = 0.0, sxx = 0.0;

  const Eigen::Index width = m1 + 1;
  const double* bt = ctx.basis_t.data();
  double* sp = s.data();
  double* pp = p.data();
  auto absorb = [&](Eigen::Index row) {
    const double xi = ctx.X(row, dim);
    const double* col = bt + row * width;
    for (Eigen::Index q = 0; q < width; ++q) {
      sp[q] += col[q];
      pp[q] += xi * col[q];
    }
    cnt += 1.0;
    sx += xi;
    sxx += xi * xi;
  };

  if (direction == HingeDirection::Positive) {
    // Active set {x > t}; walk knots descending, absorbing samples from above.
    Eigen::Index pos = n;
    for (Eigen::Index k = K - 1; k >= 0; --k) {
      const double t = knots[static_cast<std::size_t>(k)];
      while (pos > 0 && ctx.X(order_asc[static_cast<std::size_t>(pos - 1)], dim) > t) {
        absorb(order_asc[static_cast<std::size_t>(--pos)]);
      }
      out.dots.col(k) = p - t * s;
      out.sq[k] = sxx - 2.0 * t * sx + t * t * cnt;
      out.ref[k] = sxx + 2.0 * std::abs(t * sx) + t * t * cnt;
      out.active[static_cast<std::size_t>(k)] = static_cast<Eigen::Index>(cnt);
    }
  } else {
    // Active set {x < t}; walk knots ascending, absorbing samples from below.
    Eigen::Index pos = 0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double t = knots[static_cast<std::size_t>(k)];
      while (pos < n && ctx.X(order_asc[static_cast<std::size_t>(pos)], dim) < t) {
        absorb(order_asc[static_cast<std::size_t>(pos++)]);
      }
      out.dots.col(k) = t * s - p;
      out.sq[k] = t * t * cnt - 2.0 * t * sx + sxx;
      out.ref[k] = t * t * cnt + 2.0 * std::abs(t * sx) + sxx;
      out.active[static_cast<std::size_t>(k)] = static_cast<Eigen::Index>(cnt);
    }
  }
}

// Solves the bordered normal equations for one candidate through the Schur
// complement of the two border columns (opposite hinge halves have disjoint
// support, hence a zero cross term). The caller supplies precomputed border
// products against the factored system. Returns false when the border looks
// ill-conditioned and the caller should fall back.
bool solve_bordered(double base_rss, double uu, double btu, double g1, bool keep_u, double vv,
                    double btv, double g2, bool keep_v, double cross, double& rss_out) {
  if (!keep_u && !keep_v) return false;
  if (keep_u && !keep_v) {
    const double s11 = uu - btu;
    if (!(s11 > 1e-8 * uu)) return false;
    rss_out = std::max(base_rss - g1 * g1 / s11, 0.0);
    return std::isfinite(rss_out);
  }
  if (!keep_u && keep_v) {
    const double s22 = vv - btv;
    if (!(s22 > 1e-8 * vv)) return false;
    rss_out = std::max(base_rss - g2 * g2 / s22, 0.0);
    return std::isfinite(rss_out);
  }
  const double s11 = uu - btu;
  const double s22 = vv - btv;
  const double s12 = -cross;
  if (!(s11 > 1e-8 * uu) || !(s22 > 1e-8 * vv)) return false;
  const double det = s11 * s22 - s12 * s12;
  if (!(det > 1e-12 * s11 * s22)) return false;
  const double gamma1 = (s22 * g1 - s12 * g2) / det;
  const double gamma2 = (s11 * g2 - s12 * g1) / det;
  rss_out = std::max(base_rss - (g1 * gamma1 + g2 * gamma2), 0.0);
  return std::isfinite(rss_out);
}

void scan_fast_dim(const ScanContext& ctx, const FastState& state,
                   const std::vector<Eigen::Index>& order_asc, int dim, bool dim_in_model,
                   const Candidate* cands, const int* knots_after, std::size_t count,
                   CandidateScore* scores) {
  const Eigen::Index n = ctx.X.rows();
  const Eigen::Index m1 = ctx.basis.cols();
  std::vector<double> knots(count);
  for (std::size_t i = 0; i < count; ++i) knots[i] = cands[i].knot;

  DimSweep pos, neg;
  sweep_dimension(ctx, order_asc, knots, HingeDirection::Positive, dim, pos);
  sweep_dimension(ctx, order_asc, knots, HingeDirection::Negative, dim, neg);

  // Batched border products for the whole dimension: one triangular solve per
  // direction instead of one per knot.
  const Eigen::Index pr = state.chol.rank;
  const auto kc = static_cast<Eigen::Index>(count);
  Eigen::MatrixXd bu(pr, kc), bv(pr, kc);
  Eigen::RowVectorXd btu(kc), btv(kc), cross(kc), g1(kc), g2(kc);
  if (state.usable) {
    for (Eigen::Index r = 0; r < pr; ++r) {
      bu.row(r) = pos.dots.row(state.chol.pivots[static_cast<std::size_t>(r)]);
      bv.row(r) = neg.dots.row(state.chol.pivots[static_cast<std::size_t>(r)]);
    }
    const Eigen::MatrixXd pu = state.chol.solve(bu);
    btu = (bu.array() * pu.array()).colwise().sum();
    g1 = pos.dots.row(m1) - state.beta0.transpose() * bu;
    if (dim_in_model) {
      // Once a dimension carries a knot, the feature itself lies in the model
      // span, so the two halves of any new pair differ by an in-span vector:
      // the pair lowers RSS exactly as much as the positive half alone.
      btv.setZero();
      cross.setZero();
      g2.setZero();
    } else {
      const Eigen::MatrixXd qv = state.chol.solve(bv);
      btv = (bv.array() * qv.array()).colwise().sum();
      cross = (bu.array() * qv.array()).colwise().sum();
      g2 = neg.dots.row(m1) - state.beta0.transpose() * bv;
    }
  }

  for (std::size_t i = 0; i < count; ++i) {
    CandidateScore& score = scores[i];
    score.c = effective_params(ctx.model_size + 2, knots_after[i], ctx.penalty);
    if (score.c >= static_cast<double>(n)) continue;

    const auto k = static_cast<Eigen::Index>(i);
    const bool u_zero = pos.active[i] == 0;
    const bool v_zero = neg.active[i] == 0;
    const bool u_cancel = !u_zero && pos.sq[k] < 1e-8 * pos.ref[k];
    const bool v_cancel = !v_zero && neg.sq[k] < 1e-8 * neg.ref[k];

    double rss = 0.0;
    bool ok = false;
    if (state.usable && !u_cancel) {
      if (dim_in_model) {
        ok = solve_bordered(state.base_rss, pos.sq[k], btu[k], g1[k], !u_zero, 0.0, 0.0, 0.0,
                            false, 0.0, rss);
        if (!ok) {
          // The border was rejected as dependent: with the feature already in
          // the span that means the whole pair is, so the fit cannot move.
          rss = state.base_rss;
          ok = true;
        }
      } else if (!v_cancel) {
        ok = solve_bordered(state.base_rss, pos.sq[k], btu[k], g1[k], !u_zero, neg.sq[k], btv[k],
                            g2[k], !v_zero, cross[k], rss);
      }
    }
    if (ok) {
      score.rss = rss;
      score.gcv = gcv_or_inf(rss, score.c, n);
      score.valid = std::isfinite(score.gcv);
    } else {
      score = score_one_full(ctx, cands[i], knots_after[i]);
    }
  }
}

struct DimRange {
  int dim = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool in_model = false;
};

// Per-dimension candidate knots plus a row order the sweeps can walk. The
// order groups rows by the knot interval containing their value (rows at a
// knot follow rows below it, ascending row index within a group), which is
// exactly the monotonicity the absorb walks rely on; a full per-dimension
// sort would buy nothing more.
struct DimCandidates {
  std::vector<double> values;             // ascending candidate knots
  std::vector<Eigen::Index> sweep_order;  // rows, monotone against every knot predicate
};

void scan_fast_serial(const ScanContext& ctx, const FastState& state,
                      const std::vector<DimCandidates>& dims, const std::vector<DimRange>& ranges,
                      const std::vector<Candidate>& cands, const std::vector<int>& knots_after,
                      std::vector<CandidateScore>& scores) {
  for (const DimRange& r : ranges) {
    scan_fast_dim(ctx, state, dims[static_cast<std::size_t>(r.dim)].sweep_order, r.dim, r.in_model,
                  cands.data() + r.begin, knots_after.data() + r.begin, r.end - r.begin,
                  scores.data() + r.begin);
  }
}

void scan_fast_parallel(const ScanContext& ctx, const FastState& state,
                        const std::vector<DimCandidates>& dims, const std::vector<DimRange>& ranges,
                        const std::vector<Candidate>& cands, const std::vector<int>& knots_after,
                        std::vector<CandidateScore>& scores) {
  const int threads = max_threads();
  const auto count = static_cast<std::int64_t>(ranges.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::int64_t ri = 0; ri < count; ++ri) {
    const DimRange& r = ranges[static_cast<std::size_t>(ri)];
    scan_fast_dim(ctx, state, dims[static_cast<std::size_t>(r.dim)].sweep_order, r.dim, r.in_model,
                  cands.data() + r.begin, knots_after.data() + r.begin, r.end - r.begin,
                  scores.data() + r.begin);
  }
}

// Winner selection shared by both phases: minimum GCV, near-ties resolved by
// candidate order key.
std::ptrdiff_t select_winner(const std::vector<CandidateScore>& scores,
                             const std::vector<Candidate>& cands) {
  double best = kInf;
  for (const auto& s : scores) {
    if (s.valid && s.gcv < best) best = s.gcv;
  }
  if (!std::isfinite(best)) return -1;
  const double cutoff = best + tie_slack(best);
  std::ptrdiff_t winner = -1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i].valid || scores[i].gcv > cutoff) continue;
    if (winner < 0) {
      winner = static_cast<std::ptrdiff_t>(i);
      continue;
    }
    const Candidate& a = cands[i];
    const Candidate& b = cands[static_cast<std::size_t>(winner)];
    if (a.dim < b.dim || (a.dim == b.dim && a.knot < b.knot)) winner = static_cast<std::ptrdiff_t>(i);
  }
  return winner;
}

int count_knots(const KnotSet& knots) { return static_cast<int>(knots.size()); }

// Stable LSD radix sort of one column, rows carried along; equal values keep
// ascending row order. Doubles map to unsigned keys that preserve ordering
// (finite inputs only, which the dataset validation guarantees). Byte passes
// whose digit is constant across the column are skipped, which drops most of
// the high-exponent passes on normalized data.
void sort_column(const double* x, Eigen::Index n, std::vector<std::uint64_t>& keys,
                 std::vector<std::uint32_t>& rows, std::vector<std::uint64_t>& keys_tmp,
                 std::vector<std::uint32_t>& rows_tmp) {
  keys.resize(static_cast<std::size_t>(n));
  rows.resize(static_cast<std::size_t>(n));
  keys_tmp.resize(static_cast<std::size_t>(n));
  rows_tmp.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(x[i]);
    u = (u & 0x8000000000000000ull) ? ~u : (u | 0x8000000000000000ull);
    keys[static_cast<std::size_t>(i)] = u;
    rows[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
  }
  for (int shift = 0; shift < 64; shift += 8) {
    std::uint32_t count[256] = {};
    for (Eigen::Index i = 0; i < n; ++i) ++count[(keys[static_cast<std::size_t>(i)] >> shift) & 255u];
    const std::uint32_t first = (keys[0] >> shift) & 255u;
    if (count[first] == static_cast<std::uint32_t>(n)) continue;
    std::uint32_t offset = 0;
    for (int b = 0; b < 256; ++b) {
      const std::uint32_t c = count[b];
      count[b] = offset;
      offset += c;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::uint64_t k = keys[static_cast<std::size_t>(i)];
      const std::uint32_t dst = count[(k >> shift) & 255u]++;
      keys_tmp[dst] = k;
      rows_tmp[dst] = rows[static_cast<std::size_t>(i)];
    }
    keys.swap(keys_tmp);
    rows.swap(rows_tmp);
  }
}

std::vector<DimCandidates> build_candidates(const Eigen::MatrixXd& X, const FitConfig& config) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  std::vector<DimCandidates> out(static_cast<std::size_t>(d));
  const int threads = max_threads();
#pragma omp parallel num_threads(threads)
  {
    std::vector<std::uint64_t> keys, keys_tmp;
    std::vector<std::uint32_t> rows, rows_tmp;
#pragma omp for schedule(static)
    for (Eigen::Index j = 0; j < d; ++j) {
      sort_column(X.col(j).data(), n, keys, rows, keys_tmp, rows_tmp);
      DimCandidates& dc = out[static_cast<std::size_t>(j)];
      dc.sweep_order.resize(static_cast<std::size_t>(n));
      std::vector<double> distinct;
      distinct.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index row = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
        dc.sweep_order[static_cast<std::size_t>(i)] = row;
        const double v = X(row, j);
        if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
      }
      if (config.knot_subsample > 0 && static_cast<int>(distinct.size()) > config.knot_subsample) {
        // Evenly spaced order statistics over the distinct values.
        const std::size_t k = static_cast<std::size_t>(config.knot_subsample);
        std::vector<double> picked;
        picked.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t idx = (i * (distinct.size() - 1)) / (k - 1);
          picked.push_back(distinct[idx]);
        }
        picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
        distinct = std::move(picked);
      }
      // The dimension maximum would give an identically-zero positive hinge.
      if (!distinct.empty()) distinct.pop_back();
      dc.values = std::move(distinct);
    }
  }
  return out;
}

MarsModel snapshot_model(double intercept, const std::vector<MarsTerm>& terms, int input_dim,
                         const FitConfig& config) {
  MarsModel m;
  m.intercept = intercept;
  m.terms = terms;
  m.input_dim = input_dim;
  m.config = config;
  return m;
}

Eigen::Index resolve_fit_rows(const Dataset& train, Eigen::Index fit_rows) {
  if (fit_rows <= 0 || fit_rows > train.n()) return train.n();
  return fit_rows;
}

// Least squares over a column subset of `design` through the cached Gram
// matrix. Dependent columns drop out of the pivoted factor and get a zero
// coefficient; the fit is unchanged because the remaining columns span the
// same space. Falls back to a dense orthogonal solve if the factorization
// rejects the system outright. Returns coefficients aligned with `keep`.
Eigen::VectorXd solve_subset(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                             const std::vector<Eigen::Index>& keep) {
  const auto p = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd a(p, p);
  Eigen::VectorXd r(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    r[i] = rhs[keep[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < p; ++j) {
      a(i, j) = gram(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  PivotedChol chol;
  if (chol.factor(a, 1e-12)) {
    Eigen::VectorXd rr(chol.rank);
    for (Eigen::Index i = 0; i < chol.rank; ++i) rr[i] = r[chol.pivots[static_cast<std::size_t>(i)]];
    const Eigen::VectorXd sol = chol.solve(rr);
    if (sol.allFinite()) {
      for (Eigen::Index i = 0; i < chol.rank; ++i) beta[chol.pivots[static_cast<std::size_t>(i)]] = sol[i];
      return beta;
    }
  }

  Eigen::MatrixXd sub(design.rows(), p);
  for (Eigen::Index i = 0; i < p; ++i) sub.col(i) = design.col(keep[static_cast<std::size_t>(i)]);
  return least_squares(sub, y).coefficients;
}

double explicit_rss(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                    const std::vector<Eigen::Index>& keep, const Eigen::VectorXd& beta) {
  Eigen::VectorXd pred = Eigen::VectorXd::Zero(design.rows());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(keep.size()); ++i) {
    pred += beta[i] * design.col(keep[static_cast<std::size_t>(i)]);
  }
  return (y - pred).squaredNorm();
}

}  // namespace

void FitConfig::validate() const {
  if (max_basis < 1) throw ValidationError("max_basis must be at least 1");
  if (gcv_knot_penalty < 0.0) throw ValidationError("gcv_knot_penalty must be nonnegative");
  if (knot_subsample != 0 && knot_subsample < 2)
    throw ValidationError("knot_subsample must be at least 2 when set");
  if (!(mars_train_fraction > 0.0 && mars_train_fraction <= 1.0))
    throw ValidationError("mars_train_fraction must lie in (0, 1]");
}

double ramp(double x) { return x >= 0.0 ? x : 0.0; }

double eval_basis(const BasisFunction& basis, const Eigen::VectorXd& x) {
  if (basis.dimension < 0 || basis.dimension >= x.size())
    throw ValidationError("basis dimension out of range");
  const double v = x[basis.dimension];
  return basis.direction == HingeDirection::Positive ? ramp(v - basis.knot) : ramp(basis.knot - v);
}

double eval_model(const MarsModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.input_dim) throw ValidationError("input dimension mismatch");
  double acc = model.intercept;
  for (const MarsTerm& term : model.terms) acc += term.coefficient * eval_basis(term.basis, x);
  return acc;
}

Eigen::VectorXd eval_model(const MarsModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.input_dim) throw ValidationError("input dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), model.intercept);
  for (const MarsTerm& term : model.terms) {
    const int j = term.basis.dimension;
    const double t = term.basis.knot;
    if (term.basis.direction == HingeDirection::Positive) {
      for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] += term.coefficient * ramp(X(i, j) - t);
    } else {
      for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] += term.coefficient * ramp(t - X(i, j));
    }
  }
  return out;
}

double effective_params(int basis_count, int knot_count, double penalty) {
  if (basis_count < 0) throw ValidationError("basis count must be nonnegative");
  return static_cast<double>(basis_count + 1) + penalty * static_cast<double>(knot_count);
}

double gcv_from_rss(double rss, double effective_params, Eigen::Index n) {
  if (n <= 0) throw ValidationError("sample count must be positive");
  if (effective_params >= static_cast<double>(n))
    throw NumericError("GCV undefined: effective parameters exceed sample count");
  const double denom = 1.0 - effective_params / static_cast<double>(n);
  return rss / (denom * denom);
}

double gcv(const Eigen::VectorXd& targets, const Eigen::VectorXd& predictions,
           double effective_params) {
  if (targets.size() != predictions.size()) throw ValidationError("length mismatch");
  return gcv_from_rss((targets - predictions).squaredNorm(), effective_params, targets.size());
}

LeastSquaresResult least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets) {
  if (design.rows() != targets.size()) throw ValidationError("design/target row mismatch");
  if (design.rows() < 1) throw ValidationError("empty design");
  if (!design.allFinite() || !targets.allFinite())
    throw ValidationError("non-finite entries in least squares input");

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  LeastSquaresResult result;
  result.coefficients = cod.solve(targets);
  result.rank = cod.rank();
  result.rank_deficient = result.rank < design.cols();
  result.rss = (targets - design * result.coefficients).squaredNorm();
  return result;
}

std::vector<CandidateModel> forward_pass(const Dataset& train, const FitConfig& config,
                                         Eigen::Index fit_rows) {
  train.validate();
  config.validate();
  const Eigen::Index n = resolve_fit_rows(train, fit_rows);
  const Eigen::MatrixXd X = train.features.topRows(n);
  const Eigen::VectorXd y = train.targets.head(n);
  const int d = static_cast<int>(X.cols());

  const auto dim_cands = build_candidates(X, config);

  // Intercept-only start.
  Eigen::MatrixXd basis = Eigen::MatrixXd::Ones(n, 1);
  LeastSquaresResult lsq = least_squares(basis, y);
  double intercept = lsq.coefficients[0];
  std::vector<MarsTerm> terms;
  KnotSet knots;

  std::vector<CandidateModel> trail;
  {
    CandidateModel start;
    start.model = snapshot_model(intercept, terms, d, config);
    start.record.model_size = 0;
    start.record.rss = lsq.rss;
    start.record.effective_params = effective_params(0, 0, config.gcv_knot_penalty);
    start.record.gcv = gcv_or_inf(start.record.rss, start.record.effective_params, n);
    trail.push_back(std::move(start));
  }

  // The Gram system of the current basis, grown in place as pairs are added;
  // only the fast path reads it.
  FastState state;
  if (config.fast_update) {
    state.gram = Eigen::MatrixXd::Constant(1, 1, static_cast<double>(n));
    state.rhs = Eigen::VectorXd::Constant(1, y.sum());
    state.yy = y.squaredNorm();
  }

  while (static_cast<int>(terms.size()) + 2 <= config.max_basis) {
    const int m = static_cast<int>(terms.size());

    std::vector<Candidate> cands;
    std::vector<int> knots_after;
    std::vector<DimRange> ranges;
    for (int j = 0; j < d; ++j) {
      const std::size_t begin = cands.size();
      for (double t : dim_cands[static_cast<std::size_t>(j)].values) {
        if (knots.count({j, t})) continue;
        cands.push_back({j, t});
        knots_after.push_back(count_knots(knots) + 1);
      }
      if (cands.size() > begin) {
        const auto it = knots.lower_bound({j, -kInf});
        const bool in_model = it != knots.end() && it->first == j;
        ranges.push_back({j, begin, cands.size(), in_model});
      }
    }
    if (cands.empty()) break;

    // Row-major view of [basis | y] so the sweeps touch contiguous memory.
    Eigen::MatrixXd basis_t(basis.cols() + 1, n);
    basis_t.topRows(basis.cols()) = basis.transpose();
    basis_t.row(basis.cols()) = y.transpose();

    ScanContext ctx{X, y, basis, basis_t, config.gcv_knot_penalty, m, count_knots(knots)};
    std::vector<CandidateScore> scores(cands.size());

    const bool parallel = max_threads() > 1;
    if (config.fast_update) {
      refresh_fast_state(state);
      if (parallel) {
        scan_fast_parallel(ctx, state, dim_cands, ranges, cands, knots_after, scores);
      } else {
        scan_fast_serial(ctx, state, dim_cands, ranges, cands, knots_after, scores);
      }
    } else {
      if (parallel) {
        scan_full_parallel(ctx, cands, knots_after, scores);
      } else {
        scan_full_serial(ctx, cands, knots_after, scores);
      }
    }

    const std::ptrdiff_t winner = select_winner(scores, cands);
    if (winner < 0) break;
    const double current_gcv = trail.back().record.gcv;
    const double winner_gcv = scores[static_cast<std::size_t>(winner)].gcv;
    if (!(winner_gcv < current_gcv - tie_slack(current_gcv))) break;

    const Candidate chosen = cands[static_cast<std::size_t>(winner)];
    const Eigen::VectorXd ucol = hinge_column(X, chosen.dim, chosen.knot, HingeDirection::Positive);
    const Eigen::VectorXd vcol = hinge_column(X, chosen.dim, chosen.knot, HingeDirection::Negative);
    if (config.fast_update) {
      const Eigen::Index m1 = basis.cols();
      state.gram.conservativeResize(m1 + 2, m1 + 2);
      state.rhs.conservativeResize(m1 + 2);
      state.gram.col(m1).head(m1) = basis.transpose() * ucol;
      state.gram.col(m1 + 1).head(m1) = basis.transpose() * vcol;
      state.gram(m1, m1) = ucol.squaredNorm();
      state.gram(m1 + 1, m1 + 1) = vcol.squaredNorm();
      state.gram(m1, m1 + 1) = 0.0;  // opposite halves have disjoint support
      state.gram(m1 + 1, m1) = 0.0;
      state.gram.row(m1).head(m1) = state.gram.col(m1).head(m1).transpose();
      state.gram.row(m1 + 1).head(m1) = state.gram.col(m1 + 1).head(m1).transpose();
      state.rhs[m1] = ucol.dot(y);
      state.rhs[m1 + 1] = vcol.dot(y);
    }

    Eigen::MatrixXd next(n, basis.cols() + 2);
    next.leftCols(basis.cols()) = basis;
    next.col(basis.cols()) = ucol;
    next.col(basis.cols() + 1) = vcol;
    basis.swap(next);

    terms.push_back({0.0, {chosen.dim, chosen.knot, HingeDirection::Positive}});
    terms.push_back({0.0, {chosen.dim, chosen.knot, HingeDirection::Negative}});
    knots.insert({chosen.dim, chosen.knot});

    double rss;
    Eigen::VectorXd beta;
    if (config.fast_update) {
      std::vector<Eigen::Index> keep(static_cast<std::size_t>(basis.cols()));
      std::iota(keep.begin(), keep.end(), Eigen::Index{0});
      beta = solve_subset(basis, y, state.gram, state.rhs, keep);
      rss = explicit_rss(basis, y, keep, beta);
    } else {
      lsq = least_squares(basis, y);
      beta = lsq.coefficients;
      rss = lsq.rss;
    }
    intercept = beta[0];
    for (std::size_t k = 0; k < terms.size(); ++k) terms[k].coefficient = beta[static_cast<Eigen::Index>(k) + 1];

    CandidateModel step;
    step.model = snapshot_model(intercept, terms, d, config);
    step.record.model_size = static_cast<int>(terms.size());
    step.record.rss = rss;
    step.record.effective_params =
        effective_params(static_cast<int>(terms.size()), count_knots(knots), config.gcv_knot_penalty);
    step.record.gcv = gcv_or_inf(rss, step.record.effective_params, n);
    trail.push_back(std::move(step));
  }
  return trail;
}

MarsModel backward_prune(const std::vector<CandidateModel>& candidates, const Dataset& train,
                         const FitConfig& config, Eigen::Index fit_rows) {
  if (candidates.empty()) throw ValidationError("empty forward trail");
  train.validate();
  const Eigen::Index n = resolve_fit_rows(train, fit_rows);
  const Eigen::MatrixXd X = train.features.topRows(n);
  const Eigen::VectorXd y = train.targets.head(n);

  const MarsModel& largest = candidates.back().model;
  const int m_full = largest.size();

  // Design of the largest model and its cached Gram system.
  Eigen::MatrixXd design(n, m_full + 1);
  design.col(0).setOnes();
  for (int k = 0; k < m_full; ++k) {
    design.col(k + 1) = hinge_column(X, largest.terms[static_cast<std::size_t>(k)].basis.dimension,
                                     largest.terms[static_cast<std::size_t>(k)].basis.knot,
                                     largest.terms[static_cast<std::size_t>(k)].basis.direction);
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * y;
  const double yy = y.squaredNorm();

  auto knots_of = [&](const std::vector<int>& active) {
    KnotSet s;
    for (int k : active) {
      const BasisFunction& b = largest.terms[static_cast<std::size_t>(k)].basis;
      s.insert({b.dimension, b.knot});
    }
    return count_knots(s);
  };

  auto build_model = [&](const std::vector<int>& active) {
    std::vector<Eigen::Index> keep;
    keep.push_back(0);
    for (int k : active) keep.push_back(k + 1);
    const Eigen::VectorXd beta = solve_subset(design, y, gram, rhs, keep);
    MarsModel m = largest;
    m.terms.clear();
    m.intercept = beta[0];
    for (std::size_t i = 0; i < active.size(); ++i) {
      MarsTerm term = largest.terms[static_cast<std::size_t>(active[i])];
      term.coefficient = beta[static_cast<Eigen::Index>(i) + 1];
      m.terms.push_back(term);
    }
    CandidateModel out;
    out.model = std::move(m);
    out.record.model_size = static_cast<int>(active.size());
    out.record.rss = explicit_rss(design, y, keep, beta);
    out.record.effective_params =
        effective_params(static_cast<int>(active.size()), knots_of(active), config.gcv_knot_penalty);
    out.record.gcv = gcv_or_inf(out.record.rss, out.record.effective_params, n);
    return out;
  };

  std::vector<int> active(static_cast<std::size_t>(m_full));
  std::iota(active.begin(), active.end(), 0);

  std::vector<CandidateModel> recorded;
  recorded.push_back(candidates.back());

  while (!active.empty()) {
    // Score every single-basis removal through the cached Gram system; the
    // Gram identity rss = y'y - r'beta avoids touching the design rows. The
    // recorded model below refits explicitly.
    double best_gcv = kInf;
    std::vector<double> gcvs(active.size(), kInf);
    for (std::size_t i = 0; i < active.size(); ++i) {
      std::vector<Eigen::Index> keep;
      keep.push_back(0);
      for (std::size_t j = 0; j < active.size(); ++j) {
        if (j != i) keep.push_back(active[j] + 1);
      }
      std::vector<int> remaining;
      for (std::size_t j = 0; j < active.size(); ++j) {
        if (j != i) remaining.push_back(active[j]);
      }
      const Eigen::VectorXd beta = solve_subset(design, y, gram, rhs, keep);
      double rdot = 0.0;
      for (Eigen::Index k = 0; k < beta.size(); ++k) rdot += rhs[keep[static_cast<std::size_t>(k)]] * beta[k];
      const double rss = std::max(yy - rdot, 0.0);
      const double c = effective_params(static_cast<int>(remaining.size()), knots_of(remaining),
                                        config.gcv_knot_penalty);
      gcvs[i] = gcv_or_inf(rss, c, n);
      if (gcvs[i] < best_gcv) best_gcv = gcvs[i];
    }

    std::size_t pick = active.size();
    if (std::isfinite(best_gcv)) {
      const double cutoff = best_gcv + tie_slack(best_gcv);
      for (std::size_t i = 0; i < active.size(); ++i) {
        if (gcvs[i] > cutoff) continue;
        if (pick == active.size()) {
          pick = i;
          continue;
        }
        const BasisFunction& a = largest.terms[static_cast<std::size_t>(active[i])].basis;
        const BasisFunction& b = largest.terms[static_cast<std::size_t>(active[pick])].basis;
        const auto key = [](const BasisFunction& f) {
          return std::make_tuple(f.dimension, f.knot, f.direction == HingeDirection::Negative);
        };
        if (key(a) < key(b)) pick = i;
      }
    } else {
      pick = 0;  // GCV undefined at this size (tiny n); still prune deterministically
    }

    active.erase(active.begin() + static_cast<std::ptrdiff_t>(pick));
    recorded.push_back(build_model(active));
  }

  // Best model over every recorded size; exact GCV ties prefer the smaller
  // model.
  std::size_t best = 0;
  for (std::size_t i = 1; i < recorded.size(); ++i) {
    const double g = recorded[i].record.gcv;
    const double b = recorded[best].record.gcv;
    if (g < b || (g == b && recorded[i].record.model_size < recorded[best].record.model_size)) {
      best = i;
    }
  }

  MarsModel result = recorded[best].model;
  result.gcv_trail.clear();
  for (const auto& c : candidates) result.gcv_trail.push_back(c.record);
  for (std::size_t i = 1; i < recorded.size(); ++i) result.gcv_trail.push_back(recorded[i].record);
  return result;
}

FitResult fit_mars(const Dataset& train, const FitConfig& config) {
  train.validate();
  config.validate();
  const auto fit_rows = static_cast<Eigen::Index>(
      std::max<double>(1.0, std::floor(config.mars_train_fraction * static_cast<double>(train.n()))));

  const auto start = std::chrono::steady_clock::now();
  const auto trail = forward_pass(train, config, fit_rows);
  MarsModel model = backward_prune(trail, train, config, fit_rows);
  const auto stop = std::chrono::steady_clock::now();

  FitResult result;
  result.model = std::move(model);
  result.fit_seconds = std::chrono::duration<double>(stop - start).count();
  return result;
}

FeatureImportance feature_importance(const MarsModel& model) {
  FeatureImportance report;
  report.per_dimension.resize(static_cast<std::size_t>(model.input_dim));
  for (int j = 0; j < model.input_dim; ++j) report.per_dimension[static_cast<std::size_t>(j)].dimension = j;
  for (const MarsTerm& term : model.terms) {
    auto& entry = report.per_dimension[static_cast<std::size_t>(term.basis.dimension)];
    entry.importance += std::abs(term.coefficient);
    entry.knots.push_back(term.basis.knot);
  }
  for (auto& entry : report.per_dimension) {
    std::sort(entry.knots.begin(), entry.knots.end());
    entry.knots.erase(std::unique(entry.knots.begin(), entry.knots.end()), entry.knots.end());
  }
  report.ranking.resize(report.per_dimension.size());
  std::iota(report.ranking.begin(), report.ranking.end(), 0);
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](int a, int b) {
    return report.per_dimension[static_cast<std::size_t>(a)].importance >
           report.per_dimension[static_cast<std::size_t>(b)].importance;
  });
  return report;
}

}  // namespace marsnet
