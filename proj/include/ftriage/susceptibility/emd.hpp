#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ftriage::susceptibility {

/// Largest grid side accepted by emd_exact_2d.
inline constexpr std::size_t kExactGridLimit = 16;

/// Turns a non-negative activation map into a distribution: each cell becomes
/// (v + eps) / sum(v + eps) with eps = 1e-12 * max(1, max v). With
/// shift_negative the map is first shifted by its minimum when that is
/// negative (pre-ReLU capture); otherwise negative entries are a UsageError.
std::vector<double> normalize_map(std::span<const float> map, bool shift_negative = false);
std::vector<double> normalize_map(std::span<const double> map, bool shift_negative = false);

/// 1-Wasserstein distance on 0..n-1 with unit spacing: sum |CDF_p - CDF_q|.
double emd_1d(std::span<const double> p, std::span<const double> q);

/// Exact optimal transport cost between two distributions on the same
/// height x width grid, ground distance = Euclidean distance between cell
/// centres. Solved with the transportation simplex. Grids with a side above
/// kExactGridLimit raise CapabilityError.
double emd_exact_2d(std::span<const double> p, std::span<const double> q, std::size_t height, std::size_t width);

/// sqrt(W1(row marginals)^2 + W1(column marginals)^2). Never exceeds
/// emd_exact_2d on the same inputs.
double emd_marginal(std::span<const double> p, std::span<const double> q, std::size_t height, std::size_t width);

/// Dense transportation problem: supplies a (size m), demands b (size n),
/// row-major costs (m*n). Totals must agree within 1e-9 relative.
double transport_cost(std::span<const double> supply, std::span<const double> demand, std::span<const double> cost);

} // namespace ftriage::susceptibility
