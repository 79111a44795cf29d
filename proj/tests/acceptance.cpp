// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Random instances come from fixed seeds so every run is reproducible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dform/diffusion.hpp"
#include "dform/invariance.hpp"
#include "dform/mosco.hpp"
#include "support.hpp"

using namespace dform;
using namespace dform::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = true;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> powers_of_ten(int lo, int hi) {
  std::vector<double> out;
  for (int j = lo; j <= hi; ++j) out.push_back(std::pow(10.0, j));
  return out;
}

IndexSet killed_set(const MixedForm& mf) { return mf.killed; }

// 1. Representation identities for both approximation families.
Outcome representation_identities() {
  const auto start = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto form = random_form(rng, pick(rng, 1, 30));
    for (int v = 0; v < 10; ++v) {
      const Vector u = random_vector(rng, form.size());
      for (double p : {0.01, 0.1, 1.0, 10.0}) {
        worst = std::max(worst, representation_check(form, TimeParameter{p}, u).residual);
        worst = std::max(worst, representation_check(form, ResolventParameter{p}, u).residual);
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-10 && elapsed < 10.0,
          fmt("max residual %.3g (tol 1e-10), %.2f s (limit 10 s)", worst, elapsed)};
}

// 2. Monotone approximation on the logarithmic grids.
Outcome monotone_approximation() {
  Rng rng(102);
  const std::vector<double> betas = powers_of_ten(-3, 8);
  const std::vector<double> ts = powers_of_ten(-8, 3);
  std::size_t violations = 0;
  double worst_gap = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto form = random_form(rng, pick(rng, 2, 30));
    const Vector u = random_vector(rng, form.size());
    const double e = energy(form, u);
    const double slack = 1e-12 * std::max(1.0, e);
    double previous = -INFINITY;
    for (double beta : betas) {
      const double v = deny_yosida(form, beta, u);
      if (v < previous - slack) ++violations;
      previous = v;
    }
    previous = -INFINITY;
    // E^(t) must grow as t decreases
    for (auto it = ts.rbegin(); it != ts.rend(); ++it) {
      const double v = time_dependent(form, *it, u);
      if (v < previous - slack) ++violations;
      previous = v;
    }
    const double scale = std::max(1.0, e);
    worst_gap = std::max(worst_gap, std::abs(deny_yosida(form, betas.back(), u) - e) / scale);
    worst_gap = std::max(worst_gap, std::abs(time_dependent(form, ts.front(), u) - e) / scale);
  }
  return {violations == 0 && worst_gap <= 1e-6,
          fmt("%zu monotonicity violations, max relative gap at the extremes %.3g (tol 1e-6)", violations, worst_gap)};
}

// 3. Decomposition exactness and the finite-measure collapse.
Outcome decomposition_exactness() {
  Rng rng(103);
  double worst_residual = 0.0;
  std::size_t partition_errors = 0, collapse_errors = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const MixedForm mf = random_mixed_form(rng, pick(rng, 2, 5), 6);
    const Decomposition d = decompose(mf.form);
    for (int v = 0; v < 5; ++v) {
      worst_residual = std::max(worst_residual, std::abs(decomposition_residual(mf.form, d, random_vector(rng, mf.form.size()))));
    }
    const auto& r = d.report;
    IndexSet all = r.x_rec;
    all.insert(all.end(), r.x_diss.begin(), r.x_diss.end());
    all.insert(all.end(), r.x_tc.begin(), r.x_tc.end());
    std::sort(all.begin(), all.end());
    IndexSet expected(mf.form.size());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = i;
    if (all != expected || r.x_rec != mf.conservative || r.x_diss != mf.killed || !d.parts_verified) ++partition_errors;
    if (r.x_rec != r.x_cons || r.x_diss != r.x_trans || !r.x_tc.empty()) ++collapse_errors;
  }
  return {worst_residual == 0.0 && partition_errors == 0 && collapse_errors == 0,
          fmt("max energy-sum residual %.3g (required 0), %zu partition errors, %zu collapse errors", worst_residual,
              partition_errors, collapse_errors)};
}

// 4. Inclusions and the trichotomy for irreducible forms.
Outcome inclusions_and_trichotomy() {
  Rng rng(104);
  std::size_t inclusion_errors = 0, trichotomy_errors = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto form = random_form(rng, pick(rng, 1, 20));
    const auto r = classify(form);
    if (!std::includes(r.x_cons.begin(), r.x_cons.end(), r.x_rec.begin(), r.x_rec.end()) ||
        !std::includes(r.x_trans.begin(), r.x_trans.end(), r.x_diss.begin(), r.x_diss.end())) {
      ++inclusion_errors;
    }
    // connected instance, killed with probability 1/2
    const std::size_t n = pick(rng, 1, 12);
    std::vector<Edge> edges;
    add_connected_block(rng, 0, n, 0.3, edges);
    Vector k = Vector::Zero(static_cast<Eigen::Index>(n));
    if (uniform(rng, 0.0, 1.0) < 0.5) k[static_cast<Eigen::Index>(pick(rng, 0, n - 1))] = uniform(rng, 0.01, 2.0);
    const auto connected = FiniteDirichletForm::from_edges(n, std::move(edges), k, random_measure(rng, n));
    const bool recurrent = irreducible_trichotomy(connected) == ComponentClass::Recurrent;
    if (recurrent != connected.killing_free()) ++trichotomy_errors;
  }
  return {inclusion_errors == 0 && trichotomy_errors == 0,
          fmt("%zu inclusion violations, %zu trichotomy mismatches over 100 instances", inclusion_errors,
              trichotomy_errors)};
}

// 5. Conservative spaces of the approximating forms.
Outcome approximation_spaces() {
  Rng rng(105);
  const std::vector<double> ts{1e-3, 1e-2, 0.1, 1.0, 10.0};
  const std::vector<double> betas{0.1, 1.0, 10.0, 100.0, 1000.0};
  std::size_t mismatches = 0;
  double cons_defect = 0.0, diss_gap = INFINITY;
  for (int rep = 0; rep < 50; ++rep) {
    const MixedForm mf = random_mixed_form(rng, pick(rng, 2, 4), 6);
    const auto a = approx_conservative_spaces(mf.form, ts, betas);
    const auto r = classify(mf.form);
    bool ok = a.all_equal && a.x_cons == r.x_cons && a.x_cons == mf.conservative;
    for (const auto& e : a.entries) ok = ok && e.conservative == r.x_cons;
    if (!ok) ++mismatches;
    cons_defect = std::max(cons_defect, r.cons_max_defect);
    if (!r.x_diss.empty()) diss_gap = std::min(diss_gap, r.diss_min_defect);
  }
  return {mismatches == 0 && cons_defect <= 1e-9 && diss_gap >= 1e-6,
          fmt("%zu space mismatches, max |T_t 1 - 1| on X_cons %.3g (tol 1e-9), min 1 - T_1 1 on X_diss %.3g "
              "(need >= 1e-6)",
              mismatches, cons_defect, diss_gap)};
}

// 6. Discretized point interaction.
Outcome delta_example() {
  const auto start = Clock::now();
  const std::size_t grid = 201;
  const double h = 2.0 / static_cast<double>(grid - 1);
  const std::vector<double> couplings{1.0, 1e1, 1e2, 1e3, 1e4};
  const FormSequence seq = delta_example_sequence(grid, h, couplings);
  const auto vectors = random_test_vectors(seq.limit.base(), 5, 20240917);
  const MoscoReport res = resolvent_convergence(seq, 1.0, vectors, 1e-3);
  IndexSet left;
  for (std::size_t i = 0; i < grid / 2; ++i) left.push_back(i);
  const EmergentInvariance e = emergent_invariance(seq, left);
  const double elapsed = seconds_since(start);
  const double rate = res.rate.value_or(NAN);
  const bool rate_ok = std::abs(rate + 1.0) <= 0.2;
  const bool limit_ok = e.limit_commutator <= 1e-9;
  const bool gap_ok = e.min_term_commutator >= 1e-3;
  std::string terms;
  for (double c : e.term_commutators) terms += fmt("%s%.2g", terms.empty() ? "" : ", ", c);
  return {rate_ok && limit_ok && gap_ok && elapsed < 30.0,
          fmt("rate %.4f (need -1 +/- 0.2), limit commutator %.3g (tol 1e-9), term commutators [%s] (need all >= "
              "1e-3), %.2f s (limit 30 s)",
              rate, e.limit_commutator, terms.c_str(), elapsed)};
}

// 7. Invariance preservation and part convergence.
Outcome preservation_and_parts() {
  Rng rng(107);
  std::size_t not_preserved = 0;
  double worst_ratio = 1.0;
  for (int rep = 0; rep < 20; ++rep) {
    IndexSet first;
    const FormSequence seq = two_component_sequence(rng, 4, first);
    if (!invariance_preservation_check(seq, first).preserved) ++not_preserved;
    // test vectors supported on the invariant set
    std::vector<Vector> vectors = random_test_vectors(seq.limit.base(), 3, 20240917 + rep);
    const Vector mask = indicator(first, seq.limit.base().size());
    for (Vector& v : vectors) v = v.cwiseProduct(mask);
    const MoscoReport ambient = resolvent_convergence(seq, 1.0, vectors, 1e-3);
    const MoscoReport part = part_convergence_check(seq, first, 1.0, vectors, 1e-3);
    for (std::size_t k = 0; k < part.worst.size(); ++k) {
      const double a = ambient.worst[k], p = part.worst[k];
      if (a == 0.0 && p == 0.0) continue;
      worst_ratio = std::max({worst_ratio, a / p, p / a});
    }
  }
  return {not_preserved == 0 && worst_ratio <= 2.0,
          fmt("%zu sequences lose invariance, worst part/ambient residual ratio %.6g (limit 2)", not_preserved,
              worst_ratio)};
}

// 8. First diffusion example.
Outcome first_diffusion_example() {
  const DiffusionSpec spec = example_5_1_spec();
  const double s2 = spec.scale(-2.0), s1 = spec.scale(-1.0);
  const DiffusionReport r = example_5_1();
  const auto& i1 = r.intervals[0];
  const auto& i2 = r.intervals[1];
  const bool feller_ok = i2.feller.conservative == std::optional<bool>(true) && i2.feller.lower.integral &&
                         !i2.feller.lower.integral->finite && i2.feller.upper.integral &&
                         !i2.feller.upper.integral->finite;
  const bool ok = s2 == 0.5 && s1 == 1.0 && i1.recurrence.verdict == Recurrence::Recurrent &&
                  i2.recurrence.verdict == Recurrence::Transient && feller_ok && r.whole_space_conservative &&
                  r.transient_part_conservative;
  return {ok, fmt("s(-2) = %.17g, s(-1) = %.17g, I1 %s, I2 %s, Feller on I2 %s, whole space %s, transient part %s", s2,
                  s1, std::string(to_string(i1.recurrence.verdict)).c_str(),
                  std::string(to_string(i2.recurrence.verdict)).c_str(), feller_ok ? "conservative" : "not conservative",
                  r.whole_space_conservative ? "conservative" : "not conservative",
                  r.transient_part_conservative ? "conservative" : "not conservative")};
}

// 9. Second diffusion example.
Outcome second_diffusion_example() {
  const FellerVerdict f = feller_explosion_test(example_5_2_spec(), 0);
  const bool lower_div = f.lower.integral && !f.lower.integral->finite;
  const bool upper_fin = f.upper.integral && f.upper.integral->finite;
  BirthDeathSpec flat;
  flat.p = 0.0;
  BirthDeathSpec root;
  root.p = -0.5;
  const DiffusionReport r = example_5_2(flat);
  const bool interval_diss = std::find(r.diss.begin(), r.diss.end(), "I") != r.diss.end();
  const auto a = birth_death_conservative(flat).conservative;
  const auto b = birth_death_conservative(root).conservative;
  const bool ok = lower_div && upper_fin && interval_diss && a == std::optional<bool>(true) &&
                  b == std::optional<bool>(false);
  return {ok, fmt("lower integral %s, upper integral %s, interval %s, a_k = 1 %s, a_k = k^-1/2 %s",
                  lower_div ? "divergent" : "not divergent", upper_fin ? "finite" : "not finite",
                  interval_diss ? "dissipative" : "not dissipative",
                  a == std::optional<bool>(true) ? "conservative" : "not conservative",
                  b == std::optional<bool>(false) ? "non-conservative" : "not non-conservative")};
}

// 10. Heat equation with excessive initial data.
Outcome heat_with_excessive_data() {
  Rng rng(110);
  const std::vector<double> times{0.01, 0.1, 1.0, 10.0, 100.0};
  double worst = 0.0, worst_lower = 0.0;
  std::size_t failures = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const MixedForm mf = random_mixed_form(rng, pick(rng, 2, 4), 6);
    const std::size_t n = mf.form.size();
    // c + K g with g >= 0 supported on the killed part: a sum of excessive functions
    Vector g = Vector::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t v : killed_set(mf)) g[static_cast<Eigen::Index>(v)] = uniform(rng, 0.0, 2.0);
    const GreenResult green = green_apply(mf.form, g);
    Vector u = Vector::Constant(static_cast<Eigen::Index>(n), uniform(rng, 0.1, 2.0));
    for (std::size_t v = 0; v < n; ++v)
      if (green.verdicts[v].finite) u[static_cast<Eigen::Index>(v)] += green.verdicts[v].value;
    const ExcessiveResiduals r = excessive_decomposition_check(mf.form, u, times);
    if (!r.passed) ++failures;
    for (double x : r.residuals) worst = std::max(worst, x);
    worst_lower = std::max(worst_lower, r.lower_bound_violation);
  }
  return {failures == 0 && worst <= 1e-10 && worst_lower <= 1e-10,
          fmt("max residual %.3g (tol 1e-10), max lower-bound violation %.3g (tol 1e-10), %zu failed instances", worst,
              worst_lower, failures)};
}

// 11. Green operator against the direct solve.
Outcome green_oracle() {
  Rng rng(111);
  double worst = 0.0;
  for (int rep = 0; rep < 30; ++rep) {
    const MixedForm mf = random_mixed_form(rng, pick(rng, 2, 4), 6);
    const Vector f = random_vector(rng, mf.form.size()).cwiseAbs();
    const GreenResult g = green_apply(mf.form, f);
    const auto components = detect_invariant_sets(mf.form).components;
    for (std::size_t c = 0; c < components.size(); ++c) {
      if (!g.closed_form[c]) continue;
      for (std::size_t a = 0; a < components[c].size(); ++a) {
        const double exact = (*g.closed_form[c])[static_cast<Eigen::Index>(a)];
        const double got = g.partial_sums.back()[static_cast<Eigen::Index>(components[c][a])];
        worst = std::max(worst, std::abs(got - exact) / std::max(1.0, std::abs(exact)));
      }
    }
  }
  const GreenResult two = green_apply(two_node(0.0, 1.0), Vector::Ones(2));
  const double k0 = two.verdicts[0].value, k1 = two.verdicts[1].value;
  const bool example_ok = two.verdicts[0].finite && two.verdicts[1].finite && k0 == 3.0 && k1 == 2.0;
  return {worst <= 1e-8 && example_ok,
          fmt("max relative gap S_n f vs direct solve %.3g (tol 1e-8), two-node Kf = (%.17g, %.17g) (exact (3, 2))",
              worst, k0, k1)};
}

// 12. Trace forms.
Outcome trace_consistency() {
  Rng rng(112);
  std::size_t mismatches = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const MixedForm mf = random_mixed_form(rng, pick(rng, 2, 4), 6);
    for (const IndexSet& y : detect_invariant_sets(mf.form).components) {
      const FiniteDirichletForm t = trace_form(mf.form, y);
      const FiniteDirichletForm p = part_form(mf.form, y).form;
      if (t.weight_matrix() != p.weight_matrix() || t.killing() != p.killing() || t.measure() != p.measure()) {
        ++mismatches;
      }
    }
  }
  const FiniteDirichletForm schur = trace_form(path_form(3, Vector::Zero(3)), {0, 2});
  const double w = schur.weight_matrix()(0, 1);
  return {mismatches == 0 && std::abs(w - 0.5) <= 1e-12,
          fmt("%zu trace/part mismatches on invariant sets, path Schur weight %.17g (expect 0.5, tol 1e-12)", mismatches,
              w)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"representation identities", representation_identities},
      {"monotone approximation", monotone_approximation},
      {"decomposition exactness", decomposition_exactness},
      {"inclusions and trichotomy", inclusions_and_trichotomy},
      {"approximation-space equality", approximation_spaces},
      {"Mosco delta example", delta_example},
      {"invariance preservation and part convergence", preservation_and_parts},
      {"first diffusion example", first_diffusion_example},
      {"second diffusion example", second_diffusion_example},
      {"heat equation with excessive data", heat_with_excessive_data},
      {"Green operator oracle", green_oracle},
      {"trace consistency", trace_consistency},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.passed) ++failed;
    std::printf("AC%-2zu %s  %s: %s\n", i + 1, o.passed ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
