#include "dform/invariance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dform {

std::string_view to_string(ComponentClass c) {
  switch (c) {
    case ComponentClass::Recurrent: return "recurrent";
    case ComponentClass::Dissipative: return "dissipative";
    case ComponentClass::TransientConservative: return "transient_conservative";
  }
  return "unknown";
}

namespace {

bool component_killed(const FiniteDirichletForm& form, const IndexSet& comp) {
  return std::any_of(comp.begin(), comp.end(), [&](std::size_t v) {
    return form.killing()[static_cast<Eigen::Index>(v)] > 0.0;
  });
}

bool subset_of(const IndexSet& a, const IndexSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

IndexSet set_difference(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

ClassificationReport classify(const FiniteDirichletForm& form, const std::optional<Vector>& rho) {
  const std::size_t n = form.size();
  const auto nn = static_cast<Eigen::Index>(n);
  Vector weight;
  if (rho) {
    if (static_cast<std::size_t>(rho->size()) != n) {
      throw Error(ErrorCode::DimensionMismatch, "rho has the wrong length");
    }
    if (!rho->allFinite() || (rho->array() <= 0.0).any()) {
      throw Error(ErrorCode::NonpositiveRho, "rho must be strictly positive everywhere");
    }
    weight = *rho;
  } else {
    weight = Vector::Constant(nn, n ? 1.0 / form.total_mass() : 0.0);
  }

  ClassificationReport report;
  report.partition = detect_invariant_sets(form);
  report.green = green_apply(form, weight);
  for (const std::string& d : report.green.diagnostics) report.diagnostics.push_back(d);

  for (std::size_t v = 0; v < n; ++v) {
    (report.green.verdicts[v].finite ? report.x_trans : report.x_rec).push_back(v);
  }

  const Vector ones = Vector::Ones(nn);
  report.semigroup_one_t1 = semigroup_apply(form, 1.0, ones).values();
  report.semigroup_one_t10 = semigroup_apply(form, 10.0, ones).values();

  for (const IndexSet& comp : report.partition.components) {
    IndexSet& target = component_killed(form, comp) ? report.x_diss : report.x_cons;
    target.insert(target.end(), comp.begin(), comp.end());
  }
  std::sort(report.x_cons.begin(), report.x_cons.end());
  std::sort(report.x_diss.begin(), report.x_diss.end());
  report.x_tc = set_difference(report.x_trans, report.x_diss);

  constexpr double cons_tol = 1e-9;
  for (std::size_t v : report.x_cons) {
    const auto i = static_cast<Eigen::Index>(v);
    report.cons_max_defect = std::max({report.cons_max_defect, std::abs(report.semigroup_one_t1[i] - 1.0),
                                       std::abs(report.semigroup_one_t10[i] - 1.0)});
  }
  if (report.cons_max_defect > cons_tol) {
    std::ostringstream msg;
    msg << "conservative set has |T_t 1 - 1| up to " << report.cons_max_defect;
    report.diagnostics.push_back(msg.str());
  }
  if (!report.x_diss.empty()) {
    report.diss_min_defect = INFINITY;
    for (std::size_t v : report.x_diss) {
      report.diss_min_defect =
          std::min(report.diss_min_defect, 1.0 - report.semigroup_one_t1[static_cast<Eigen::Index>(v)]);
    }
    if (report.diss_min_defect <= 0.0) {
      report.diagnostics.push_back("dissipative vertex with T_1 1 >= 1");
    }
  }
  if (!subset_of(report.x_rec, report.x_cons)) {
    report.diagnostics.push_back("recurrent set is not contained in the conservative set");
  }

  const auto label = report.partition.labels(n);
  report.component_class.resize(report.partition.components.size());
  for (std::size_t c = 0; c < report.partition.components.size(); ++c) {
    const std::size_t v = report.partition.components[c].front();
    if (!report.green.verdicts[v].finite) {
      report.component_class[c] = ComponentClass::Recurrent;
    } else if (std::binary_search(report.x_diss.begin(), report.x_diss.end(), v)) {
      report.component_class[c] = ComponentClass::Dissipative;
    } else {
      report.component_class[c] = ComponentClass::TransientConservative;
      report.diagnostics.push_back("component " + std::to_string(c) +
                                   " is transient and conservative, impossible on a finite space");
    }
  }
  (void)label;
  return report;
}

Decomposition decompose(const FiniteDirichletForm& form) {
  ClassificationReport report = classify(form);
  Decomposition out{part_form(form, report.x_rec), part_form(form, report.x_diss),
                    part_form(form, report.x_tc), std::move(report), false};

  auto all_of_part = [](const PartForm& part, auto select) {
    if (part.subset.empty()) return true;
    const ClassificationReport r = classify(part.form);
    return select(r).size() == part.subset.size();
  };
  out.parts_verified =
      all_of_part(out.recurrent, [](const ClassificationReport& r) { return r.x_rec; }) &&
      all_of_part(out.dissipative, [](const ClassificationReport& r) { return r.x_diss; }) &&
      all_of_part(out.transient_conservative, [](const ClassificationReport& r) { return r.x_tc; });
  return out;
}

double decomposition_residual(const FiniteDirichletForm& form, const Decomposition& parts,
                              const Vector& u) {
  ExactSum acc;
  accumulate_energy_terms(form, u, acc);
  for (const PartForm* part : {&parts.recurrent, &parts.dissipative, &parts.transient_conservative}) {
    if (part->parent_size != form.size()) {
      throw Error(ErrorCode::DimensionMismatch, "decomposition belongs to a different form");
    }
    accumulate_energy_terms(part->form, part->restrict(u), acc, true);
  }
  return acc.value();
}

double additivity_residual(const FiniteDirichletForm& form, const IndexSet& subset, const Vector& u) {
  if (static_cast<std::size_t>(u.size()) != form.size()) {
    throw Error(ErrorCode::DimensionMismatch, "u has the wrong length");
  }
  const Vector one_y = indicator(subset, form.size());
  const Vector inside = one_y.cwiseProduct(u);
  const Vector outside = (Vector::Ones(u.size()) - one_y).cwiseProduct(u);
  ExactSum acc;
  accumulate_energy_terms(form, u, acc);
  accumulate_energy_terms(form, inside, acc, true);
  accumulate_energy_terms(form, outside, acc, true);
  return acc.value();
}

bool maximality_check(const FiniteDirichletForm& form, const IndexSet& subset) {
  const PartForm part = part_form(form, subset);
  if (part.subset.empty()) return true;
  const ClassificationReport local = classify(part.form);
  const ClassificationReport global = classify(form);
  const bool transient = local.x_rec.empty();
  const bool recurrent = local.x_trans.empty();
  if (transient && !subset_of(part.subset, global.x_trans)) return false;
  if (recurrent && !subset_of(part.subset, global.x_rec)) return false;
  return true;
}

ComponentClass irreducible_trichotomy(const FiniteDirichletForm& form) {
  if (form.size() == 0) throw Error(ErrorCode::Reducible, "the empty form has no class");
  const ClassificationReport report = classify(form);
  if (report.partition.components.size() != 1) {
    throw Error(ErrorCode::Reducible, "form splits into " +
                                          std::to_string(report.partition.components.size()) +
                                          " invariant components");
  }
  return report.component_class.front();
}

ExcessiveResiduals excessive_decomposition_check(const FiniteDirichletForm& form, const Vector& u,
                                                 std::span<const double> t_grid) {
  if (t_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty time grid");
  if (!is_excessive(form, u, t_grid)) {
    throw Error(ErrorCode::NotExcessive, "T_t u exceeds u for some t in the grid");
  }
  const ClassificationReport report = classify(form);
  const Vector one_cons = indicator(report.x_cons, form.size());
  const Vector one_diss = indicator(report.x_diss, form.size());

  ExcessiveResiduals out;
  double t_max = t_grid.front();
  Vector tu_max;
  for (double t : t_grid) {
    const Vector tu = semigroup_apply(form, t, u).values();
    const Vector expected = one_cons.cwiseProduct(u) + one_diss.cwiseProduct(tu);
    out.times.push_back(t);
    out.residuals.push_back(u.size() ? (tu - expected).cwiseAbs().maxCoeff() : 0.0);
    if (t >= t_max || tu_max.size() == 0) {
      t_max = t;
      tu_max = tu;
    }
  }
  const Vector gap = one_cons.cwiseProduct(u) - tu_max;
  out.lower_bound_violation = gap.size() ? std::max(0.0, gap.maxCoeff()) : 0.0;
  const double tol = 1e-10 * std::max(1.0, u.size() ? u.cwiseAbs().maxCoeff() : 0.0);
  out.passed = out.lower_bound_violation <= tol &&
               std::all_of(out.residuals.begin(), out.residuals.end(), [tol](double r) { return r <= tol; });
  return out;
}

}  // namespace dform
