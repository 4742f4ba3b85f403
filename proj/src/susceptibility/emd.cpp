#include "ftriage/susceptibility/emd.hpp"

#include "ftriage/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ftriage::susceptibility {

namespace {

template <typename T>
std::vector<double> normalize_impl(std::span<const T> map, bool shift_negative) {
    if (map.empty()) throw UsageError("cannot normalize an empty activation map");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const T v : map) {
        if (!std::isfinite(static_cast<double>(v))) throw NumericError("activation map contains non-finite values");
        lo = std::min(lo, static_cast<double>(v));
        hi = std::max(hi, static_cast<double>(v));
    }
    double shift = 0.0;
    if (lo < 0.0) {
        if (!shift_negative) throw UsageError("activation map has negative entries; enable min-shift for pre-ReLU maps");
        shift = -lo;
    }
    const double eps = 1e-12 * std::max(1.0, hi + shift);
    std::vector<double> out(map.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        out[i] = static_cast<double>(map[i]) + shift + eps;
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

void check_distribution(std::span<const double> p, const char* what) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw UsageError(std::string(what) + " has a negative or NaN mass");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw UsageError(std::string(what) + " does not sum to 1");
}

// Transportation simplex (u-v method) on a dense m x n problem whose
// supplies and demands are all strictly positive and balance.
class TransportSimplex {
public:
    TransportSimplex(std::vector<double> a, std::vector<double> b, std::vector<double> c)
        : m_(a.size()), n_(b.size()), a_(std::move(a)), b_(std::move(b)), c_(std::move(c)),
          flow_(m_ * n_, 0.0), basic_(m_ * n_, false), u_(m_), v_(n_) {}

    double solve() {
        northwest_corner();
        const double cmax = *std::max_element(c_.begin(), c_.end());
        const double tol = 1e-12 * std::max(1.0, cmax);
        const std::size_t cap = 50 * m_ * n_ + 1000;
        for (std::size_t iter = 0;; ++iter) {
            if (iter > cap) throw NumericError("transportation simplex did not converge");
            potentials();
            std::size_t enter = m_ * n_;
            double best = -tol;
            for (std::size_t i = 0; i < m_; ++i) {
                for (std::size_t j = 0; j < n_; ++j) {
                    const std::size_t k = i * n_ + j;
                    if (basic_[k]) continue;
                    const double reduced = c_[k] - u_[i] - v_[j];
                    if (reduced < best) {
                        best = reduced;
                        enter = k;
                    }
                }
            }
            if (enter == m_ * n_) break;
            pivot(enter);
        }
        double cost = 0.0;
        for (const std::size_t k : basis_) cost += flow_[k] * c_[k];
        return cost;
    }

private:
    void add_basic(std::size_t i, std::size_t j, double x) {
        const std::size_t k = i * n_ + j;
        basic_[k] = true;
        flow_[k] = x;
        basis_.push_back(k);
    }

    // staircase from (0,0) to (m-1,n-1): always m+n-1 cells forming a tree
    void northwest_corner() {
        std::vector<double> a = a_, b = b_;
        std::size_t i = 0, j = 0;
        while (true) {
            const double x = std::min(a[i], b[j]);
            add_basic(i, j, x);
            a[i] -= x;
            b[j] -= x;
            if (i == m_ - 1 && j == n_ - 1) break;
            if (j == n_ - 1 || (i < m_ - 1 && a[i] <= b[j])) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    // nodes 0..m-1 are rows, m..m+n-1 columns
    void build_adjacency() {
        adj_.assign(m_ + n_, {});
        for (const std::size_t k : basis_) {
            const std::size_t i = k / n_, j = k % n_;
            adj_[i].push_back(k);
            adj_[m_ + j].push_back(k);
        }
    }

    void potentials() {
        build_adjacency();
        std::vector<bool> seen(m_ + n_, false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        u_[0] = 0.0;
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (const std::size_t k : adj_[node]) {
                const std::size_t i = k / n_, j = k % n_;
                if (node < m_) {
                    if (seen[m_ + j]) continue;
                    v_[j] = c_[k] - u_[i];
                    seen[m_ + j] = true;
                    stack.push_back(m_ + j);
                } else {
                    if (seen[i]) continue;
                    u_[i] = c_[k] - v_[j];
                    seen[i] = true;
                    stack.push_back(i);
                }
            }
        }
    }

    void pivot(std::size_t enter) {
        const std::size_t ie = enter / n_, je = enter % n_;
        // tree path from column je to row ie
        std::vector<std::size_t> via(m_ + n_, std::numeric_limits<std::size_t>::max());
        std::vector<bool> seen(m_ + n_, false);
        std::vector<std::size_t> queue{m_ + je};
        seen[m_ + je] = true;
        for (std::size_t q = 0; q < queue.size() && !seen[ie]; ++q) {
            const std::size_t node = queue[q];
            for (const std::size_t k : adj_[node]) {
                const std::size_t other = node < m_ ? m_ + k % n_ : k / n_;
                if (seen[other]) continue;
                seen[other] = true;
                via[other] = k;
                queue.push_back(other);
            }
        }
        if (!seen[ie]) throw NumericError("transportation basis is not a spanning tree");
        std::vector<std::size_t> path;  // edges from row ie back towards column je
        for (std::size_t node = ie; node != m_ + je;) {
            const std::size_t k = via[node];
            path.push_back(k);
            node = node < m_ ? m_ + k % n_ : k / n_;
        }
        std::reverse(path.begin(), path.end());
        // path[0] touches column je and receives -theta; signs then alternate
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = path[0];
        for (std::size_t e = 0; e < path.size(); e += 2) {
            const std::size_t k = path[e];
            if (flow_[k] < theta || (flow_[k] == theta && k < leave)) {
                theta = flow_[k];
                leave = k;
            }
        }
        for (std::size_t e = 0; e < path.size(); ++e) {
            flow_[path[e]] += (e % 2 == 0) ? -theta : theta;
        }
        flow_[enter] = theta;
        flow_[leave] = 0.0;
        basic_[leave] = false;
        basic_[enter] = true;
        *std::find(basis_.begin(), basis_.end(), leave) = enter;
    }

    std::size_t m_, n_;
    std::vector<double> a_, b_, c_;
    std::vector<double> flow_;
    std::vector<bool> basic_;
    std::vector<std::size_t> basis_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<double> u_, v_;
};

std::vector<double> row_marginal(std::span<const double> p, std::size_t h, std::size_t w) {
    std::vector<double> r(h, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) r[y] += p[y * w + x];
    return r;
}

std::vector<double> col_marginal(std::span<const double> p, std::size_t h, std::size_t w) {
    std::vector<double> c(w, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) c[x] += p[y * w + x];
    return c;
}

} // namespace

std::vector<double> normalize_map(std::span<const float> map, bool shift_negative) {
    return normalize_impl(map, shift_negative);
}

std::vector<double> normalize_map(std::span<const double> map, bool shift_negative) {
    return normalize_impl(map, shift_negative);
}

double emd_1d(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw UsageError("emd_1d supports differ in size");
    check_distribution(p, "p");
    check_distribution(q, "q");
    double cdf_p = 0.0, cdf_q = 0.0, total = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        cdf_p += p[i];
        cdf_q += q[i];
        total += std::abs(cdf_p - cdf_q);
    }
    return total;
}

double transport_cost(std::span<const double> supply, std::span<const double> demand, std::span<const double> cost) {
    if (cost.size() != supply.size() * demand.size()) throw UsageError("transport cost matrix has the wrong size");
    std::vector<std::size_t> rows, cols;
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < supply.size(); ++i) {
        if (supply[i] < 0.0) throw UsageError("negative supply");
        if (supply[i] > 0.0) rows.push_back(i);
        sa += supply[i];
    }
    for (std::size_t j = 0; j < demand.size(); ++j) {
        if (demand[j] < 0.0) throw UsageError("negative demand");
        if (demand[j] > 0.0) cols.push_back(j);
        sb += demand[j];
    }
    if (rows.empty() || cols.empty()) {
        if (sa != sb) throw UsageError("transport problem is unbalanced");
        return 0.0;
    }
    if (std::abs(sa - sb) > 1e-9 * std::max(sa, sb)) throw UsageError("transport problem is unbalanced");
    std::vector<double> a, b, c;
    for (const auto i : rows) a.push_back(supply[i]);
    for (const auto j : cols) b.push_back(demand[j] * (sa / sb));
    for (const auto i : rows)
        for (const auto j : cols) c.push_back(cost[i * demand.size() + j]);
    return TransportSimplex(std::move(a), std::move(b), std::move(c)).solve();
}

double emd_exact_2d(std::span<const double> p, std::span<const double> q, std::size_t height, std::size_t width) {
    if (height > kExactGridLimit || width > kExactGridLimit) {
        throw CapabilityError("exact EMD is limited to " + std::to_string(kExactGridLimit) + "x" +
                              std::to_string(kExactGridLimit) + " grids (got " + std::to_string(height) + "x" +
                              std::to_string(width) + "); use the marginal metric");
    }
    if (p.size() != height * width || q.size() != height * width) throw UsageError("emd grids do not match");
    check_distribution(p, "p");
    check_distribution(q, "q");
    const std::size_t n = height * width;
    std::vector<double> cost(n * n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = 0; t < n; ++t) {
            const double dy = static_cast<double>(s / width) - static_cast<double>(t / width);
            const double dx = static_cast<double>(s % width) - static_cast<double>(t % width);
            cost[s * n + t] = std::sqrt(dy * dy + dx * dx);
        }
    }
    // rescale q onto p's total so the tolerance in the precondition cannot
    // make the problem infeasible
    const double sp = std::accumulate(p.begin(), p.end(), 0.0);
    const double sq = std::accumulate(q.begin(), q.end(), 0.0);
    std::vector<double> qs(q.begin(), q.end());
    for (auto& v : qs) v *= sp / sq;
    return transport_cost(p, qs, cost);
}

double emd_marginal(std::span<const double> p, std::span<const double> q, std::size_t height, std::size_t width) {
    if (p.size() != height * width || q.size() != height * width) throw UsageError("emd grids do not match");
    const double wr = emd_1d(row_marginal(p, height, width), row_marginal(q, height, width));
    const double wc = emd_1d(col_marginal(p, height, width), col_marginal(q, height, width));
    return std::sqrt(wr * wr + wc * wc);
}

} // namespace ftriage::susceptibility
