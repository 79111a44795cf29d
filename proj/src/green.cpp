#include "dform/invariance.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dform {

namespace {

enum class Decision { Undecided, Finite, Infinite };

double partial_sum_multiplier(double n, double lambda) {
  // int_0^n e^{-s lambda} ds
  if (lambda == 0.0) return n;
  return -std::expm1(-n * lambda) / lambda;
}

}  // namespace

GreenResult green_apply(const FiniteDirichletForm& form, const Vector& f,
                        const GreenSchedule& schedule) {
  const std::size_t n = form.size();
  if (static_cast<std::size_t>(f.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "Green operator input has the wrong length");
  }
  if ((f.array() < 0.0).any() || !f.allFinite()) {
    throw Error(ErrorCode::NegativeInput, "Green operator needs a finite nonnegative input");
  }
  if (schedule.checkpoints.empty() || schedule.extension_factor <= 1.0) {
    throw Error(ErrorCode::InvalidArgument, "Green schedule needs checkpoints and a factor > 1");
  }

  const InvariantPartition partition = detect_invariant_sets(form);
  const std::size_t nc = partition.components.size();
  const Matrix l = form.generator_matrix();

  GreenResult result;
  result.verdicts.assign(n, GreenValue{});
  result.closed_form.assign(nc, std::nullopt);

  std::vector<bool> killed(nc, false);
  std::vector<double> f_sup(nc, 0.0);
  // Components are decoupled, so each gets its own spectral core. A shared
  // decomposition could mix a zero eigenvector of one component into another,
  // and the partial-sum multiplier n would amplify that leakage.
  std::vector<SpectralCore> cores;
  std::vector<Vector> f_local;
  cores.reserve(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const IndexSet& comp = partition.components[c];
    const auto nn = static_cast<Eigen::Index>(comp.size());
    Matrix l_cc(nn, nn);
    Vector rhs(nn);
    for (Eigen::Index a = 0; a < nn; ++a) {
      const auto va = static_cast<Eigen::Index>(comp[static_cast<std::size_t>(a)]);
      killed[c] = killed[c] || form.killing()[va] > 0.0;
      f_sup[c] = std::max(f_sup[c], f[va]);
      rhs[a] = form.measure()[va] * f[va];
      for (Eigen::Index b = 0; b < nn; ++b) {
        l_cc(a, b) = l(va, static_cast<Eigen::Index>(comp[static_cast<std::size_t>(b)]));
      }
    }
    Vector m_cc(nn);
    for (Eigen::Index a = 0; a < nn; ++a) m_cc[a] = form.measure()[static_cast<Eigen::Index>(comp[static_cast<std::size_t>(a)])];
    const Vector inv_sqrt = m_cc.cwiseSqrt().cwiseInverse();
    cores.emplace_back(Matrix(inv_sqrt.asDiagonal() * l_cc * inv_sqrt.asDiagonal()), m_cc);
    f_local.push_back(rhs.cwiseQuotient(m_cc));
    if (killed[c]) {
      Eigen::LDLT<Matrix> ldlt(l_cc);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        result.closed_form[c] = ldlt.solve(rhs);
      }
    }
  }

  std::vector<Decision> decision(nc, Decision::Undecided);
  for (std::size_t c = 0; c < nc; ++c) {
    if (f_sup[c] == 0.0) decision[c] = Decision::Finite;
  }
  auto all_decided = [&] {
    return std::all_of(decision.begin(), decision.end(),
                       [](Decision d) { return d != Decision::Undecided; });
  };

  std::vector<double> schedule_n;
  for (double c : schedule.checkpoints) {
    if (c > schedule.max_n) break;
    schedule_n.push_back(c);
  }
  for (double next = schedule.checkpoints.back() * schedule.extension_factor; next <= schedule.max_n;
       next *= schedule.extension_factor) {
    schedule_n.push_back(next);
  }
  const std::size_t base = std::min(schedule.checkpoints.size(), schedule_n.size());

  for (std::size_t step = 0; step < schedule_n.size(); ++step) {
    if (step >= base && !schedule.exhaust && all_decided()) break;
    const double nval = schedule_n[step];
    result.checkpoints.push_back(nval);
    Vector sums(static_cast<Eigen::Index>(n)), resolvent(static_cast<Eigen::Index>(n));
    for (std::size_t c = 0; c < nc; ++c) {
      const SpectralCore& core = cores[c];
      const Vector s_c =
          core.apply(core.multipliers([nval](double lambda) { return partial_sum_multiplier(nval, lambda); }), f_local[c]);
      const Vector r_c =
          core.apply(core.multipliers([nval](double lambda) { return 1.0 / (1.0 / nval + lambda); }), f_local[c]);
      const IndexSet& comp = partition.components[c];
      for (std::size_t a = 0; a < comp.size(); ++a) {
        sums[static_cast<Eigen::Index>(comp[a])] = s_c[static_cast<Eigen::Index>(a)];
        resolvent[static_cast<Eigen::Index>(comp[a])] = r_c[static_cast<Eigen::Index>(a)];
      }
    }
    result.partial_sums.push_back(std::move(sums));
    result.resolvent_values.push_back(std::move(resolvent));
    if (step == 0) continue;

    const Vector& cur = result.partial_sums[step];
    const Vector& prev = result.partial_sums[step - 1];
    for (std::size_t c = 0; c < nc; ++c) {
      if (decision[c] != Decision::Undecided) continue;
      bool doubling = true;
      double cur_min = INFINITY;
      double cur_max = 0.0;
      double increment = 0.0;
      for (std::size_t v : partition.components[c]) {
        const auto i = static_cast<Eigen::Index>(v);
        doubling = doubling && cur[i] >= 2.0 * prev[i];
        cur_min = std::min(cur_min, cur[i]);
        cur_max = std::max(cur_max, std::abs(cur[i]));
        increment = std::max(increment, std::abs(cur[i] - prev[i]));
      }
      if (doubling && cur_min > 1e6 * f_sup[c]) {
        decision[c] = Decision::Infinite;
      } else if (increment <= 1e-13 * cur_max) {
        decision[c] = Decision::Finite;
      }
    }
  }

  const Vector& last = result.partial_sums.back();
  for (std::size_t c = 0; c < nc; ++c) {
    const bool structural_finite = killed[c] || f_sup[c] == 0.0;
    const IndexSet& comp = partition.components[c];
    std::ostringstream where;
    where << "component " << c << " (vertex " << comp.front() << ")";
    if (decision[c] == Decision::Undecided) {
      result.diagnostics.push_back(where.str() + ": partial sums undecided up to n = " +
                                   std::to_string(result.checkpoints.back()) +
                                   "; using the structural verdict");
    } else if ((decision[c] == Decision::Finite) != structural_finite) {
      result.diagnostics.push_back(where.str() + ": partial sums suggest " +
                                   (decision[c] == Decision::Finite ? "a finite" : "an infinite") +
                                   " limit but the component is " +
                                   (killed[c] ? "killed" : "killing-free") +
                                   "; using the structural verdict");
    }

    for (std::size_t a = 0; a < comp.size(); ++a) {
      GreenValue& out = result.verdicts[comp[a]];
      out.finite = structural_finite;
      if (!structural_finite) continue;
      if (f_sup[c] == 0.0) {
        out.value = 0.0;
      } else if (result.closed_form[c]) {
        out.value = (*result.closed_form[c])[static_cast<Eigen::Index>(a)];
      } else {
        out.value = last[static_cast<Eigen::Index>(comp[a])];
      }
    }

    if (decision[c] == Decision::Finite && result.closed_form[c] && f_sup[c] > 0.0) {
      const Vector& exact = *result.closed_form[c];
      double diff = 0.0;
      for (std::size_t a = 0; a < comp.size(); ++a) {
        diff = std::max(diff, std::abs(exact[static_cast<Eigen::Index>(a)] -
                                       last[static_cast<Eigen::Index>(comp[a])]));
      }
      if (diff > 1e-8 * std::max(1.0, exact.cwiseAbs().maxCoeff())) {
        std::ostringstream msg;
        msg << where.str() << ": partial-sum limit differs from the direct solve by " << diff;
        result.diagnostics.push_back(msg.str());
      }
    }
  }
  return result;
}

}  // namespace dform
