#include "nnf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nnf/error.hpp"
#include "nnf/simd/kernels.hpp"

namespace nnf {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  require(values.size() == rows * cols, ErrorKind::invalid, "matrix value count does not match extents");
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
  return t;
}

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kMaxSweeps = 60;

// Column-major working copy: column j occupies [j*len, (j+1)*len).
struct Columns {
  std::size_t len = 0;
  std::size_t count = 0;
  std::vector<double> data;
  std::span<double> col(std::size_t j) { return {data.data() + j * len, len}; }
  std::span<const double> col(std::size_t j) const { return {data.data() + j * len, len}; }
};

// Orthogonalizes the columns of `a` in place (Hestenes). When `v` is non-null
// the same rotations are accumulated into it.
int jacobi_sweeps(Columns& a, Columns* v) {
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < a.count; ++i) {
      for (std::size_t j = i + 1; j < a.count; ++j) {
        const double alpha = simd::sum_squares(a.col(i));
        const double beta = simd::sum_squares(a.col(j));
        const double gamma = simd::dot(a.col(i), a.col(j));
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::fabs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        simd::rotate(a.col(i), a.col(j), c, s);
        if (v) simd::rotate(v->col(i), v->col(j), c, s);
      }
    }
    if (!rotated) break;
  }
  return sweep + 1;
}

// Fills the columns flagged in `missing` with unit vectors orthogonal to all
// other columns (Gram-Schmidt against the standard basis).
void complete_orthonormal(Columns& u, const std::vector<bool>& missing) {
  std::size_t next_basis = 0;
  for (std::size_t j = 0; j < u.count; ++j) {
    if (!missing[j]) continue;
    for (; next_basis < u.len; ++next_basis) {
      std::vector<double> cand(u.len, 0.0);
      cand[next_basis] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.count; ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          const double p = simd::dot(cand, u.col(k));
          simd::axpy(-p, u.col(k), cand);
        }
      }
      const double norm = std::sqrt(simd::sum_squares(cand));
      if (norm > 0.5) {
        auto dst = u.col(j);
        for (std::size_t r = 0; r < u.len; ++r) dst[r] = cand[r] / norm;
        ++next_basis;
        break;
      }
    }
  }
}

SvdResult svd_tall(const Matrix& m, bool want_vectors) {
  // m.rows >= m.cols
  const std::size_t rows = m.rows, cols = m.cols;
  Columns a{rows, cols, std::vector<double>(rows * cols)};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) a.data[c * rows + r] = m(r, c);

  Columns v{cols, cols, std::vector<double>(cols * cols, 0.0)};
  for (std::size_t c = 0; c < cols; ++c) v.data[c * cols + c] = 1.0;

  SvdResult res;
  res.sweeps = jacobi_sweeps(a, want_vectors ? &v : nullptr);

  std::vector<double> sigma(cols);
  for (std::size_t c = 0; c < cols; ++c) sigma[c] = std::sqrt(simd::sum_squares(a.col(c)));

  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  res.singular_values.resize(cols);
  for (std::size_t k = 0; k < cols; ++k) res.singular_values[k] = sigma[order[k]];
  if (!want_vectors) return res;

  const double smax = res.singular_values.empty() ? 0.0 : res.singular_values.front();
  Columns u{rows, cols, std::vector<double>(rows * cols, 0.0)};
  std::vector<bool> missing(cols, false);
  for (std::size_t k = 0; k < cols; ++k) {
    const double s = sigma[order[k]];
    // Columns with negligible norm carry no direction; they are rebuilt below.
    if (s <= smax * 1e-300 || s == 0.0) {
      missing[k] = true;
      continue;
    }
    auto src = a.col(order[k]);
    auto dst = u.col(k);
    for (std::size_t r = 0; r < rows; ++r) dst[r] = src[r] / s;
  }
  complete_orthonormal(u, missing);

  res.left = Matrix(rows, cols);
  res.right = Matrix(cols, cols);
  for (std::size_t k = 0; k < cols; ++k) {
    for (std::size_t r = 0; r < rows; ++r) res.left(r, k) = u.data[k * rows + r];
    for (std::size_t r = 0; r < cols; ++r) res.right(r, k) = v.data[order[k] * cols + r];
  }
  return res;
}

}  // namespace

SvdResult svd(const Matrix& m) {
  require(m.rows >= 1 && m.cols >= 1, ErrorKind::invalid, "svd needs a nonempty matrix");
  if (m.rows >= m.cols) return svd_tall(m, true);
  SvdResult t = svd_tall(m.transposed(), true);
  std::swap(t.left, t.right);
  return t;
}

std::vector<double> singular_values(const Matrix& m) {
  require(m.rows >= 1 && m.cols >= 1, ErrorKind::invalid, "svd needs a nonempty matrix");
  if (m.rows >= m.cols) return svd_tall(m, false).singular_values;
  return svd_tall(m.transposed(), false).singular_values;
}

double median(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::invalid, "median of empty sample");
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double quantile(std::span<const double> xs, double q) {
  require(!xs.empty(), ErrorKind::invalid, "quantile of empty sample");
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const double h = (static_cast<double>(s.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

DescriptiveStats descriptive_stats(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::invalid, "descriptive statistics of empty sample");
  DescriptiveStats st;
  const auto n = static_cast<double>(xs.size());
  auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  st.min = *mn;
  st.max = *mx;
  st.mean = simd::sum(xs) / n;
  st.median = median(xs);

  double m3 = 0.0, m4 = 0.0, m5 = 0.0;
  for (double x : xs) {
    const double d = x - st.mean;
    const double d2 = d * d;
    m3 += d2 * d;
    m4 += d2 * d2;
    m5 += d2 * d2 * d;
  }
  const double m2 = simd::sum_sq_dev(xs, st.mean) / n;
  st.central_moments[2] = m2;
  st.central_moments[3] = m3 / n;
  st.central_moments[4] = m4 / n;
  st.central_moments[5] = m5 / n;
  st.variance = m2;
  st.std = std::sqrt(m2);
  // Relative threshold: a constant sample can leave rounding residue in m2.
  const double scale = std::max(std::fabs(st.mean), std::fabs(st.max - st.min));
  if (m2 <= 0.0 || st.std <= 1e-14 * scale) {
    st.shape_defined = false;
    st.skewness = 0.0;
    st.excess_kurtosis = 0.0;
    if (st.max == st.min) {
      st.variance = st.std = 0.0;
      for (double& c : st.central_moments) c = 0.0;
    }
  } else {
    st.skewness = st.central_moments[3] / (m2 * st.std);
    st.excess_kurtosis = st.central_moments[4] / (m2 * m2) - 3.0;
  }
  return st;
}

double entropy_bits(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double w : weights) {
    if (w <= 0.0) continue;
    const double p = w / total;
    h -= p * std::log2(p);
  }
  return h;
}

Histogram histogram_entropy(std::span<const double> xs, std::size_t bins, double lo, double hi) {
  require(!xs.empty(), ErrorKind::invalid, "histogram of empty sample");
  require(bins >= 1 && lo < hi, ErrorKind::invalid, "histogram needs bins >= 1 and lo < hi");
  Histogram h;
  h.counts.assign(bins, 0);
  const double width = hi - lo;
  for (double x : xs) {
    double pos = (x - lo) / width * static_cast<double>(bins);
    std::size_t b = 0;
    if (pos >= static_cast<double>(bins)) {
      b = bins - 1;
    } else if (pos > 0.0) {
      b = static_cast<std::size_t>(pos);
    }
    ++h.counts[b];
  }
  std::vector<double> w(h.counts.begin(), h.counts.end());
  h.entropy_bits = entropy_bits(w);
  return h;
}

namespace {

// Merge sort that counts inversions (pairs out of order, ties not counted).
std::uint64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = sort_count_swaps(v, scratch, lo, mid) + sort_count_swaps(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      scratch[k++] = v[j++];
      swaps += mid - i;
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Sum over runs of equal values of t(t-1)/2; input sorted.
std::uint64_t tied_pairs(const std::vector<double>& sorted) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

std::optional<double> kendall_tau_b(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorKind::invalid, "kendall_tau_b needs equal-length lists");
  require(xs.size() >= 2, ErrorKind::invalid, "kendall_tau_b needs at least two observations");
  const std::size_t n = xs.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return xs[a] < xs[b] || (xs[a] == xs[b] && ys[a] < ys[b]);
  });

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::uint64_t n1 = 0, n3 = 0;  // ties in x; joint ties
  {
    std::uint64_t run_x = 1, run_xy = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      const bool same_x = i < n && xs[idx[i]] == xs[idx[i - 1]];
      const bool same_xy = same_x && ys[idx[i]] == ys[idx[i - 1]];
      if (same_x) {
        ++run_x;
      } else {
        n1 += run_x * (run_x - 1) / 2;
        run_x = 1;
      }
      if (same_xy) {
        ++run_xy;
      } else {
        n3 += run_xy * (run_xy - 1) / 2;
        run_xy = 1;
      }
    }
  }
  std::vector<double> y(n), scratch(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = ys[idx[i]];
  const std::uint64_t swaps = sort_count_swaps(y, scratch, 0, n);
  const std::uint64_t n2 = tied_pairs(y);

  const std::int64_t numerator = static_cast<std::int64_t>(n0) - static_cast<std::int64_t>(n1) -
                                 static_cast<std::int64_t>(n2) + static_cast<std::int64_t>(n3) -
                                 2 * static_cast<std::int64_t>(swaps);
  const std::uint64_t dx = n0 - n1, dy = n0 - n2;
  if (dx == 0 || dy == 0) return std::nullopt;
  return static_cast<double>(numerator) / std::sqrt(static_cast<double>(dx) * static_cast<double>(dy));
}

double ks_distance_sorted(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::invalid, "ks_distance needs nonempty samples");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_distance(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return ks_distance_sorted(sa, sb);
}

}  // namespace nnf
