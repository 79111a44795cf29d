#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dform/invariance.hpp"
#include "support.hpp"

using namespace dform;
using namespace dform::testing;

namespace {

bool throws_code(ErrorCode code, auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

// Two components: A = {0, 1, 2} killing-free, B = {3, 4} killed at 3.
FiniteDirichletForm mixed_form() {
  return FiniteDirichletForm::from_edges(5, {{0, 1, 1.0}, {1, 2, 2.0}, {3, 4, 1.5}}, Vector{{0.0, 0.0, 0.0, 0.5, 0.0}},
                                         Vector{{1.0, 2.0, 1.0, 1.0, 3.0}});
}

const IndexSet kA{0, 1, 2};
const IndexSet kB{3, 4};

}  // namespace

TEST_CASE("invariant sets are the connected components") {
  CHECK(detect_invariant_sets(two_node()).components == std::vector<IndexSet>{{0, 1}});
  const auto two_edges =
      FiniteDirichletForm::from_edges(4, {{0, 1, 1.0}, {2, 3, 1.0}}, Vector::Zero(4), Vector::Ones(4));
  CHECK(detect_invariant_sets(two_edges).components == std::vector<IndexSet>{{0, 1}, {2, 3}});
  const auto cut_path = FiniteDirichletForm::from_edges(3, {{0, 1, 1.0}, {1, 2, 0.0}}, Vector::Zero(3), Vector::Ones(3));
  const auto parts = detect_invariant_sets(cut_path);
  CHECK(parts.components == std::vector<IndexSet>{{0, 1}, {2}});
  CHECK(semigroup_commutator_battery(cut_path, {2}, std::vector<double>{0.5, 1.0}, 5, 7) <= 1e-12);
}

TEST_CASE("is_invariant: structure decides, numerics agree") {
  const auto path = path_form(6, Vector::Zero(6));
  for (const IndexSet& y : {IndexSet{}, IndexSet{0, 1, 2, 3, 4, 5}}) {
    const auto v = is_invariant(path, y);
    CHECK(v.invariant);
    CHECK(v.numerics_agree);
  }
  const auto left = is_invariant(path, {0, 1, 2});
  CHECK_FALSE(left.invariant);
  CHECK(left.semigroup_residual > 1e-3);
  CHECK(left.numerics_agree);
  const auto form = mixed_form();
  CHECK(is_invariant(form, kA).invariant);
  CHECK(is_invariant(form, kB).invariant);
  CHECK(is_invariant(form, kB).semigroup_residual <= 1e-12);
  CHECK(throws_code(ErrorCode::IndexOutOfRange, [&] { is_invariant(form, {7}); }));
}

TEST_CASE("commutator norm matches a brute-force difference of operators") {
  const auto path = path_form(5, Vector::Zero(5));
  const Matrix op = path.spectral().symmetric_operator(path.spectral().multipliers([](double l) { return std::exp(-l); }));
  const IndexSet y{0, 1};
  Matrix p = Matrix::Zero(5, 5);
  p(0, 0) = p(1, 1) = 1.0;
  const Matrix comm = p * op - op * p;
  const double brute = Eigen::JacobiSVD<Matrix>(comm).singularValues()[0];
  CHECK(commutator_norm(op, y) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("part forms and energy additivity") {
  const auto form = mixed_form();
  const PartForm full = part_form(form, {0, 1, 2, 3, 4});
  CHECK(full.form.edges().size() == form.edges().size());
  CHECK(full.form.killing() == form.killing());
  const PartForm a = part_form(form, kA);
  CHECK(a.form.size() == 3);
  CHECK(a.form.killing_free());
  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    const Vector u = random_vector(rng, 5);
    CHECK(additivity_residual(form, kA, u) == 0.0);
  }
  CHECK(throws_code(ErrorCode::NotInvariant, [&] { part_form(path_form(4, Vector::Zero(4)), {0, 1}); }));
  const Vector v = a.extend(Vector{{1.0, 2.0, 3.0}});
  CHECK(v == Vector{{1.0, 2.0, 3.0, 0.0, 0.0}});
  CHECK(a.restrict(v) == Vector{{1.0, 2.0, 3.0}});
}

TEST_CASE("trace form: Schur-complement oracles") {
  const auto path = path_form(3, Vector::Zero(3));
  const auto tr = trace_form(path, {0, 2});
  REQUIRE(tr.edges().size() == 1);
  CHECK(std::abs(tr.edges()[0].weight - 0.5) <= 1e-12);
  CHECK(tr.killing().cwiseAbs().maxCoeff() <= 1e-12);

  // series conductance w01 w12 / (w01 + w12)
  const auto weighted = FiniteDirichletForm::from_edges(3, {{0, 1, 2.0}, {1, 2, 3.0}}, Vector::Zero(3), Vector::Ones(3));
  CHECK(trace_form(weighted, {0, 2}).edges()[0].weight == doctest::Approx(6.0 / 5.0).epsilon(1e-12));

  const auto killed = path_form(2, Vector{{0.0, 1.0}});
  const auto t0 = trace_form(killed, {0});
  CHECK(std::abs(t0.killing()[0] - 0.5) <= 1e-12);

  const auto form = mixed_form();
  for (const IndexSet& y : {kA, kB}) {
    const auto t = trace_form(form, y);
    const auto p = part_form(form, y).form;
    CHECK(t.edges().size() == p.edges().size());
    for (std::size_t e = 0; e < t.edges().size(); ++e) CHECK(t.edges()[e].weight == p.edges()[e].weight);
    CHECK(t.killing() == p.killing());
  }
  CHECK(throws_code(ErrorCode::EmptySubset, [&] { trace_form(form, {}); }));
}

TEST_CASE("trace form agrees with a dense Schur complement on random forms") {
  Rng rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Edge> edges;
    const std::size_t n = pick(rng, 3, 12);
    add_connected_block(rng, 0, n, 0.3, edges);
    Vector k = Vector::Zero(static_cast<Eigen::Index>(n));
    k[static_cast<Eigen::Index>(pick(rng, 0, n - 1))] = uniform(rng, 0.1, 1.0);
    const auto form = FiniteDirichletForm::from_edges(n, edges, k, random_measure(rng, n));
    IndexSet y, b;
    for (std::size_t i = 0; i < n; ++i) (i % 2 == 0 ? y : b).push_back(i);
    const Matrix l = form.generator_matrix();
    auto block = [&](const IndexSet& r, const IndexSet& c) {
      Matrix out(r.size(), c.size());
      for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = l(r[i], c[j]);
      return out;
    };
    const Matrix schur = block(y, y) - block(y, b) * block(b, b).ldlt().solve(block(b, y));
    const Matrix got = trace_form(form, y).generator_matrix();
    CHECK((schur - got).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("Green operator") {
  const auto killed = two_node(0.0, 1.0);
  const GreenResult g = green_apply(killed, Vector::Ones(2));
  REQUIRE(g.verdicts[0].finite);
  REQUIRE(g.verdicts[1].finite);
  CHECK(g.verdicts[0].value == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(g.verdicts[1].value == doctest::Approx(2.0).epsilon(1e-12));

  const GreenResult zero = green_apply(mixed_form(), Vector::Zero(5));
  for (const GreenValue& v : zero.verdicts) {
    CHECK(v.finite);
    CHECK(v.value == 0.0);
  }
  const GreenResult free = green_apply(path_form(4, Vector::Zero(4)), Vector::Ones(4));
  for (const GreenValue& v : free.verdicts) CHECK_FALSE(v.finite);
  // S_n 1 = n on a conservative component
  CHECK(free.partial_sums.back()[0] == doctest::Approx(free.checkpoints.back()).epsilon(1e-9));
  CHECK(throws_code(ErrorCode::NegativeInput, [&] { green_apply(killed, Vector{{-1.0, 1.0}}); }));
}

TEST_CASE("Green checkpoints agree with the closed-form solve on killed components") {
  Rng rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    const MixedForm mf = random_mixed_form(rng, 3, 6);
    const Vector f = random_vector(rng, mf.form.size()).cwiseAbs();
    GreenSchedule exhaustive;
    exhaustive.exhaust = true;
    exhaustive.max_n = 1e8;
    const GreenResult g = green_apply(mf.form, f, exhaustive);
    for (std::size_t v : mf.killed) {
      REQUIRE(g.verdicts[v].finite);
    }
    const auto components = detect_invariant_sets(mf.form).components;
    REQUIRE(g.closed_form.size() == components.size());
    for (std::size_t c = 0; c < components.size(); ++c) {
      if (!g.closed_form[c]) continue;
      const Vector& closed = *g.closed_form[c];
      for (std::size_t a = 0; a < components[c].size(); ++a) {
        const double exact = closed[static_cast<Eigen::Index>(a)];
        const double tol = 1e-8 * std::max(1.0, std::abs(exact));
        CHECK(std::abs(g.partial_sums.back()[static_cast<Eigen::Index>(components[c][a])] - exact) <= tol);
      }
    }
    // oracle: L g = M f on the killed vertices
    const Matrix l = mf.form.generator_matrix();
    Matrix lkk(mf.killed.size(), mf.killed.size());
    Vector rhs(mf.killed.size());
    for (std::size_t i = 0; i < mf.killed.size(); ++i) {
      rhs[i] = mf.form.measure()[mf.killed[i]] * f[mf.killed[i]];
      for (std::size_t j = 0; j < mf.killed.size(); ++j) lkk(i, j) = l(mf.killed[i], mf.killed[j]);
    }
    const Vector oracle = lkk.fullPivLu().solve(rhs);
    for (std::size_t i = 0; i < mf.killed.size(); ++i)
      CHECK(std::abs(g.verdicts[mf.killed[i]].value - oracle[i]) <= 1e-8 * std::max(1.0, std::abs(oracle[i])));
  }
}

TEST_CASE("classify: examples") {
  const auto free = path_form(4, Vector::Zero(4));
  const auto r = classify(free);
  CHECK(r.x_rec == IndexSet{0, 1, 2, 3});
  CHECK(r.x_cons == IndexSet{0, 1, 2, 3});
  CHECK(r.x_diss.empty());
  CHECK(r.x_trans.empty());
  CHECK(r.x_tc.empty());

  const auto m = classify(mixed_form());
  CHECK(m.x_rec == kA);
  CHECK(m.x_cons == kA);
  CHECK(m.x_diss == kB);
  CHECK(m.x_trans == kB);
  CHECK(m.x_tc.empty());
  CHECK(m.diagnostics.empty());

  const auto single = classify(FiniteDirichletForm::from_edges(1, {}, Vector::Zero(1), Vector::Ones(1)));
  CHECK(single.x_rec == IndexSet{0});
  CHECK(throws_code(ErrorCode::NonpositiveRho, [&] { classify(two_node(), Vector{{1.0, 0.0}}); }));
}

TEST_CASE("classify does not depend on rho") {
  Rng rng(24);
  for (int rep = 0; rep < 10; ++rep) {
    const MixedForm mf = random_mixed_form(rng, 3, 5);
    const auto base = classify(mf.form);
    for (int d = 0; d < 5; ++d) {
      const auto other = classify(mf.form, random_measure(rng, mf.form.size()));
      CHECK(other.x_rec == base.x_rec);
      CHECK(other.x_diss == base.x_diss);
      CHECK(other.x_cons == base.x_cons);
    }
    CHECK(base.x_cons == mf.conservative);
    CHECK(base.x_diss == mf.killed);
  }
}

TEST_CASE("decompose") {
  const auto free = path_form(3, Vector::Zero(3));
  const auto d0 = decompose(free);
  CHECK(d0.recurrent.subset == IndexSet{0, 1, 2});
  CHECK(d0.dissipative.subset.empty());
  CHECK(d0.transient_conservative.subset.empty());
  CHECK(d0.dissipative.form.size() == 0);

  const auto killed = decompose(path_form(3, Vector{{0.0, 0.0, 1.0}}));
  CHECK(killed.recurrent.subset.empty());
  CHECK(killed.dissipative.subset == IndexSet{0, 1, 2});

  const auto form = mixed_form();
  const auto d = decompose(form);
  CHECK(d.recurrent.subset == kA);
  CHECK(d.dissipative.subset == kB);
  CHECK(d.parts_verified);
  Rng rng(25);
  for (int rep = 0; rep < 100; ++rep) CHECK(decomposition_residual(form, d, random_vector(rng, 5)) == 0.0);
}

TEST_CASE("maximality and trichotomy") {
  const auto form = mixed_form();
  const auto r = classify(form);
  CHECK(maximality_check(form, kB));
  CHECK(maximality_check(form, r.x_rec));
  CHECK(maximality_check(form, {0, 1, 2, 3, 4}));
  CHECK(irreducible_trichotomy(path_form(4, Vector::Zero(4))) == ComponentClass::Recurrent);
  CHECK(irreducible_trichotomy(path_form(4, Vector{{0.0, 0.0, 0.3, 0.0}})) == ComponentClass::Dissipative);
  CHECK(throws_code(ErrorCode::Reducible, [&] { irreducible_trichotomy(form); }));
}

TEST_CASE("random instances: inclusions, collapse, part inheritance") {
  Rng rng(26);
  for (int rep = 0; rep < 40; ++rep) {
    const MixedForm mf = random_mixed_form(rng, pick(rng, 1, 4), 6);
    const auto r = classify(mf.form);
    CHECK(std::includes(r.x_cons.begin(), r.x_cons.end(), r.x_rec.begin(), r.x_rec.end()));
    CHECK(std::includes(r.x_trans.begin(), r.x_trans.end(), r.x_diss.begin(), r.x_diss.end()));
    CHECK(r.x_rec == r.x_cons);
    CHECK(r.x_diss == r.x_trans);
    for (const IndexSet& comp : r.partition.components) {
      const auto part = classify(part_form(mf.form, comp).form);
      const bool parent_rec = std::includes(r.x_rec.begin(), r.x_rec.end(), comp.begin(), comp.end());
      CHECK((part.x_rec.size() == comp.size()) == parent_rec);
    }
  }
}

TEST_CASE("excessive decomposition check") {
  const std::vector<double> grid{0.1, 1.0, 10.0};
  const auto free = path_form(3, Vector::Zero(3));
  const auto ones = excessive_decomposition_check(free, Vector::Ones(3), grid);
  CHECK(ones.passed);
  for (double r : ones.residuals) CHECK(r <= 1e-12);
  CHECK(excessive_decomposition_check(free, Vector::Zero(3), grid).passed);

  // u = 1 on the conservative component, Green potential on the dissipative one
  const auto form = mixed_form();
  const GreenResult g = green_apply(form, indicator(kB, 5));
  Vector u = indicator(kA, 5);
  for (std::size_t v : kB) u[static_cast<Eigen::Index>(v)] = g.verdicts[v].value;
  const auto res = excessive_decomposition_check(form, u, grid);
  CHECK(res.passed);
  for (double r : res.residuals) CHECK(r <= 1e-10);
  CHECK(throws_code(ErrorCode::NotExcessive, [&] { excessive_decomposition_check(two_node(), Vector{{0.0, 1.0}}, grid); }));
}
