#pragma once

// Dense two-phase simplex with Bland's rule. Slow and simple on purpose: it
// shares nothing with the transportation simplex it is used to check.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ftriage::oracle {

/// min c.x subject to A x = b, x >= 0. A is row-major (rows x cols).
inline double lp_minimize(std::vector<std::vector<double>> a, std::vector<double> b, const std::vector<double>& c) {
    constexpr double tol = 1e-12;
    const std::size_t m = a.size();
    const std::size_t n = c.size();
    for (std::size_t i = 0; i < m; ++i) {
        if (b[i] < 0) {
            for (auto& v : a[i]) v = -v;
            b[i] = -b[i];
        }
    }
    // tableau columns: n originals, m artificials, rhs
    const std::size_t cols = n + m + 1;
    std::vector<std::vector<double>> t(m, std::vector<double>(cols, 0.0));
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) t[i][j] = a[i][j];
        t[i][n + i] = 1.0;
        t[i][cols - 1] = b[i];
        basis[i] = n + i;
    }

    auto pivot = [&](std::size_t row, std::size_t col) {
        const double p = t[row][col];
        for (auto& v : t[row]) v /= p;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i == row || t[i][col] == 0.0) continue;
            const double f = t[i][col];
            for (std::size_t j = 0; j < cols; ++j) t[i][j] -= f * t[row][j];
        }
        basis[row] = col;
    };

    auto run = [&](const std::vector<double>& cost, std::size_t allowed) {
        for (int guard = 0; guard < 100000; ++guard) {
            std::size_t enter = allowed;
            for (std::size_t j = 0; j < allowed; ++j) {
                double reduced = cost[j];
                for (std::size_t i = 0; i < t.size(); ++i) reduced -= cost[basis[i]] * t[i][j];
                if (reduced < -tol) {
                    enter = j;
                    break;
                }
            }
            if (enter == allowed) return;
            std::size_t leave = t.size();
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (t[i][enter] <= tol) continue;
                const double ratio = t[i][cols - 1] / t[i][enter];
                if (ratio < best - tol || (std::abs(ratio - best) <= tol && basis[i] < basis[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave == t.size()) throw std::runtime_error("lp oracle: unbounded");
            pivot(leave, enter);
        }
        throw std::runtime_error("lp oracle: iteration guard hit");
    };

    std::vector<double> phase1(n + m, 0.0);
    for (std::size_t i = 0; i < m; ++i) phase1[n + i] = 1.0;
    run(phase1, n + m);
    double infeasibility = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] >= n) infeasibility += t[i][cols - 1];
    }
    if (infeasibility > 1e-9) throw std::runtime_error("lp oracle: infeasible");

    // drive zero-level artificials out; rows with no original entry are redundant
    for (std::size_t i = 0; i < t.size();) {
        if (basis[i] < n) {
            ++i;
            continue;
        }
        std::size_t col = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(t[i][j]) > 1e-9) {
                col = j;
                break;
            }
        }
        if (col == n) {
            t.erase(t.begin() + static_cast<std::ptrdiff_t>(i));
            basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(i));
            continue;
        }
        pivot(i, col);
        ++i;
    }

    std::vector<double> phase2(n + m, 0.0);
    for (std::size_t j = 0; j < n; ++j) phase2[j] = c[j];
    run(phase2, n);
    double value = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) value += c[basis[i]] * t[i][cols - 1];
    return value;
}

/// Earth mover's distance on an h x w grid with Euclidean ground distance,
/// written as a plain LP over all h*w x h*w flows.
inline double lp_emd_grid(const std::vector<double>& p, const std::vector<double>& q, std::size_t h, std::size_t w) {
    const std::size_t k = h * w;
    std::vector<std::vector<double>> a(2 * k, std::vector<double>(k * k, 0.0));
    std::vector<double> b(2 * k), c(k * k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            a[i][i * k + j] = 1.0;
            a[k + j][i * k + j] = 1.0;
            const double dy = static_cast<double>(i / w) - static_cast<double>(j / w);
            const double dx = static_cast<double>(i % w) - static_cast<double>(j % w);
            c[i * k + j] = std::sqrt(dy * dy + dx * dx);
        }
        b[i] = p[i];
        b[k + i] = q[i];
    }
    return lp_minimize(std::move(a), std::move(b), c);
}

} // namespace ftriage::oracle
