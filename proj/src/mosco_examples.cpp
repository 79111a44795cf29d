#include "dform/mosco.hpp"

#include <cmath>

namespace dform {

namespace {

void require_odd(std::size_t grid_n) {
  if (grid_n % 2 == 0) {
    throw Error(ErrorCode::EvenGrid, "grid_n = " + std::to_string(grid_n) + " leaves no node at 0");
  }
  if (grid_n < 3) throw Error(ErrorCode::InvalidArgument, "grid_n must be at least 3");
}

void require_spacing(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::InvalidArgument, "spacing must be > 0");
}

void require_increasing(std::span<const double> values, const char* what) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must not be empty");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] > 0.0) || !std::isfinite(values[k]) || (k > 0 && values[k] <= values[k - 1])) {
      throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be positive and strictly increasing");
    }
  }
}

// Path graph with edge weight `weight` and node measure h.
FiniteDirichletForm path_form(std::size_t n, double weight, double h, const Vector& killing) {
  std::vector<Edge> edges;
  if (weight > 0.0)
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, weight});
  return FiniteDirichletForm::from_edges(n, std::move(edges), killing,
                                         Vector::Constant(static_cast<Eigen::Index>(n), h));
}

}  // namespace

FormSequence delta_example_sequence(std::size_t grid_n, double spacing_h, std::span<const double> couplings) {
  require_odd(grid_n);
  require_spacing(spacing_h);
  require_increasing(couplings, "couplings");
  const std::size_t center = grid_n / 2;
  const auto n = static_cast<Eigen::Index>(grid_n);

  std::vector<FiniteDirichletForm> terms;
  for (double k : couplings) {
    Vector killing = Vector::Zero(n);
    killing[static_cast<Eigen::Index>(center)] = k;
    terms.push_back(path_form(grid_n, 1.0 / spacing_h, spacing_h, killing));
  }
  std::vector<double> positions(grid_n);
  for (std::size_t i = 0; i < grid_n; ++i)
    positions[i] = (static_cast<double>(i) - static_cast<double>(center)) * spacing_h;
  WideSenseForm limit(path_form(grid_n, 1.0 / spacing_h, spacing_h, Vector::Zero(n)), {center});
  return FormSequence::make(std::move(terms), {couplings.begin(), couplings.end()}, std::move(limit),
                            Monotonicity::Increasing, std::move(positions));
}

FormSequence many_delta_sequence(int lo, int hi, double spacing_h, std::span<const double> couplings) {
  require_spacing(spacing_h);
  require_increasing(couplings, "couplings");
  if (hi <= lo) throw Error(ErrorCode::InvalidArgument, "window must satisfy lo < hi");
  const double per_unit = std::round(1.0 / spacing_h);
  if (per_unit < 2.0 || std::abs(per_unit * spacing_h - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "1/h must be an integer >= 2 so integers fall on nodes");
  }
  const auto m = static_cast<std::size_t>(per_unit);
  const std::size_t grid_n = static_cast<std::size_t>(hi - lo) * m + 1;
  const auto n = static_cast<Eigen::Index>(grid_n);

  std::vector<double> positions(grid_n);
  IndexSet integer_nodes;
  for (std::size_t i = 0; i < grid_n; ++i) {
    positions[i] = lo + static_cast<double>(i) / per_unit;
    if (i % m == 0) integer_nodes.push_back(i);
  }
  std::vector<FiniteDirichletForm> terms;
  for (double k : couplings) {
    Vector killing = Vector::Zero(n);
    for (std::size_t v : integer_nodes) killing[static_cast<Eigen::Index>(v)] = k;
    terms.push_back(path_form(grid_n, 1.0 / spacing_h, spacing_h, killing));
  }
  WideSenseForm limit(path_form(grid_n, 1.0 / spacing_h, spacing_h, Vector::Zero(n)), integer_nodes);
  return FormSequence::make(std::move(terms), {couplings.begin(), couplings.end()}, std::move(limit),
                            Monotonicity::Increasing, std::move(positions));
}

std::vector<IndexSet> integer_blocks(const FormSequence& seq) {
  if (seq.positions.empty()) throw Error(ErrorCode::InvalidArgument, "sequence carries no node positions");
  std::vector<IndexSet> blocks;
  IndexSet current;
  for (std::size_t i = 0; i < seq.positions.size(); ++i) {
    const double x = seq.positions[i];
    if (std::abs(x - std::round(x)) <= 1e-9) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(i);
    }
  }
  if (!current.empty()) blocks.push_back(std::move(current));
  return blocks;
}

FormSequence vanishing_sequence(std::size_t grid_n, double spacing_h, std::span<const double> scalings,
                                double limit_scaling) {
  require_odd(grid_n);
  require_spacing(spacing_h);
  if (scalings.empty()) throw Error(ErrorCode::InvalidArgument, "scalings must not be empty");
  for (std::size_t k = 0; k < scalings.size(); ++k) {
    if (!(scalings[k] > 0.0) || !std::isfinite(scalings[k]) || (k > 0 && scalings[k] > scalings[k - 1])) {
      throw Error(ErrorCode::InvalidArgument, "scalings must be positive and nonincreasing");
    }
  }
  if (!(limit_scaling >= 0.0) || limit_scaling > scalings.back()) {
    throw Error(ErrorCode::InvalidArgument, "limit scaling must lie in [0, last scaling]");
  }
  const std::size_t center = grid_n / 2;
  const auto n = static_cast<Eigen::Index>(grid_n);
  Vector killing = Vector::Zero(n);
  killing[static_cast<Eigen::Index>(center)] = 1.0;

  std::vector<FiniteDirichletForm> terms;
  std::vector<double> couplings;
  for (double s : scalings) {
    terms.push_back(path_form(grid_n, s / spacing_h, spacing_h, killing));
    couplings.push_back(1.0 / s);
  }
  std::vector<double> positions(grid_n);
  for (std::size_t i = 0; i < grid_n; ++i)
    positions[i] = (static_cast<double>(i) - static_cast<double>(center)) * spacing_h;
  WideSenseForm limit(path_form(grid_n, limit_scaling / spacing_h, spacing_h, killing));
  return FormSequence::make(std::move(terms), std::move(couplings), std::move(limit), Monotonicity::Decreasing,
                            std::move(positions));
}

}  // namespace dform
