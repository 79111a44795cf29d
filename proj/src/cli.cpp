#include "dform/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace dform::cli {

using io::Json;

namespace {

struct Options {
  std::string input;
  std::string rho_file;
  std::string u_file;
  std::string out_path;
  std::uint64_t seed = kDefaultSeed;
  bool timing = false;
  std::vector<double> t_grid{0.01, 0.1, 1.0, 10.0};
  std::vector<double> beta_grid{0.1, 1.0, 10.0, 100.0};
  std::vector<double> times{0.0, 0.1, 1.0, 10.0};
  std::vector<std::size_t> subset;
  // mosco
  std::size_t grid = 201;
  std::optional<double> spacing;
  std::vector<double> couplings;
  std::vector<double> scalings{1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  double limit_scaling = 0.0;
  std::vector<int> window{0, 3};
  double beta = 1.0;
  double t = 1.0;
  double tol = 1e-3;
  std::size_t vectors = 5;
};

// Everything a command produces; the driver adds the envelope.
struct Outcome {
  Json result = Json::object();
  Json checks = Json::array();
  Json tolerances = Json::object();
  std::vector<std::string> diagnostics;
  std::string inputs;  // bytes covered by the input digest
};

void check(Outcome& o, const std::string& name, bool passed, const Json& value = nullptr,
           const Json& tol = nullptr) {
  Json c;
  c["name"] = name;
  c["passed"] = passed;
  if (!value.is_null()) c["value"] = value;
  if (!tol.is_null()) c["tol"] = tol;
  o.checks.push_back(std::move(c));
}

io::Document load(const std::string& file, Outcome& o) {
  io::Document doc = io::read_document(file);
  o.inputs += file;
  o.inputs.push_back('\0');
  o.inputs += doc.text;
  o.inputs.push_back('\0');
  return doc;
}

Json to_json(std::span<const double> v) {
  Json out = Json::array();
  for (double x : v) out.push_back(io::number(x));
  return out;
}

bool subset_of(const IndexSet& a, const IndexSet& b) { return std::includes(b.begin(), b.end(), a.begin(), a.end()); }

Json sublabels(const std::vector<std::string>& labels, const IndexSet& subset) {
  if (labels.empty()) return nullptr;
  Json out = Json::array();
  for (std::size_t i : subset) out.push_back(labels[i]);
  return out;
}

Json classification_json(const ClassificationReport& rep) {
  Json j;
  Json comps = Json::array();
  for (std::size_t c = 0; c < rep.partition.components.size(); ++c) {
    Json item;
    item["component"] = c;
    item["vertices"] = io::to_json(rep.partition.components[c]);
    item["class"] = std::string(to_string(rep.component_class[c]));
    comps.push_back(std::move(item));
  }
  j["components"] = std::move(comps);
  j["x_rec"] = io::to_json(rep.x_rec);
  j["x_trans"] = io::to_json(rep.x_trans);
  j["x_cons"] = io::to_json(rep.x_cons);
  j["x_diss"] = io::to_json(rep.x_diss);
  j["x_tc"] = io::to_json(rep.x_tc);
  Json green = Json::array();
  for (std::size_t v = 0; v < rep.green.verdicts.size(); ++v) {
    Json row;
    row["vertex"] = v;
    row["green"] = rep.green.verdicts[v].finite ? io::number(rep.green.verdicts[v].value) : Json("inf");
    row["T_1 1"] = io::number(rep.semigroup_one_t1[static_cast<Eigen::Index>(v)]);
    row["T_10 1"] = io::number(rep.semigroup_one_t10[static_cast<Eigen::Index>(v)]);
    green.push_back(std::move(row));
  }
  j["vertices"] = std::move(green);
  j["green_checkpoints"] = to_json(rep.green.checkpoints);
  j["cons_max_defect"] = io::number(rep.cons_max_defect);
  j["diss_min_defect"] = io::number(rep.diss_min_defect);
  return j;
}

void classification_checks(Outcome& o, const ClassificationReport& rep) {
  o.tolerances["cons_defect"] = 1e-9;
  check(o, "rec_subset_cons", subset_of(rep.x_rec, rep.x_cons));
  check(o, "diss_subset_trans", subset_of(rep.x_diss, rep.x_trans));
  check(o, "cons_numeric_agreement", rep.cons_max_defect <= 1e-9, io::number(rep.cons_max_defect), 1e-9);
  check(o, "finite_measure_collapse", rep.x_rec == rep.x_cons && rep.x_diss == rep.x_trans);
  for (const std::string& d : rep.diagnostics) o.diagnostics.push_back(d);
}

// --- commands ---------------------------------------------------------------

Outcome cmd_classify(const Options& opt) {
  Outcome o;
  const io::FormSpec spec = io::parse_form(load(opt.input, o).json);
  std::optional<Vector> rho;
  if (!opt.rho_file.empty()) rho = io::parse_vector(load(opt.rho_file, o).json, spec.form.size(), "rho");
  const ClassificationReport rep = classify(spec.form, rho);
  o.result["n"] = spec.form.size();
  if (!spec.labels.empty()) o.result["labels"] = spec.labels;
  o.result.update(classification_json(rep));
  classification_checks(o, rep);
  return o;
}

bool same_form(const FiniteDirichletForm& a, const FiniteDirichletForm& b) {
  if (a.size() != b.size() || a.edges().size() != b.edges().size()) return false;
  for (std::size_t e = 0; e < a.edges().size(); ++e) {
    const Edge& x = a.edges()[e];
    const Edge& y = b.edges()[e];
    if (x.i != y.i || x.j != y.j || x.weight != y.weight) return false;
  }
  return a.killing() == b.killing() && a.measure() == b.measure();
}

Outcome cmd_decompose(const Options& opt) {
  Outcome o;
  const io::FormSpec spec = io::parse_form(load(opt.input, o).json);
  const FiniteDirichletForm& form = spec.form;
  const Decomposition d = decompose(form);

  Json parts = Json::object();
  bool revalidate = true;
  const std::pair<const char*, const PartForm*> named[] = {
      {"recurrent", &d.recurrent}, {"dissipative", &d.dissipative}, {"transient_conservative", &d.transient_conservative}};
  for (const auto& [name, part] : named) {
    Json p;
    p["vertices"] = io::to_json(part->subset);
    if (part->subset.empty()) {
      p["form"] = nullptr;
    } else {
      const Json labels = sublabels(spec.labels, part->subset);
      p["form"] = io::form_to_json(part->form, labels.is_null() ? std::vector<std::string>{}
                                                                   : labels.get<std::vector<std::string>>());
      const io::FormSpec back = io::parse_form(io::parse_json(p["form"].dump(), name));
      revalidate = revalidate && same_form(back.form, part->form);
    }
    parts[name] = std::move(p);
  }
  o.result["n"] = form.size();
  o.result["parts"] = std::move(parts);

  std::vector<Vector> vectors{Vector::Ones(static_cast<Eigen::Index>(form.size()))};
  for (Vector& v : random_test_vectors(form, opt.vectors, opt.seed)) vectors.push_back(std::move(v));
  double worst = 0.0;
  for (const Vector& u : vectors) worst = std::max(worst, std::abs(decomposition_residual(form, d, u)));
  o.result["energy_sum_residual"] = io::number(worst);
  o.result["residual_vectors"] = vectors.size();
  o.tolerances["energy_sum_residual"] = 0.0;

  check(o, "energy_sum_residual_zero", worst == 0.0, io::number(worst), 0.0);
  check(o, "parts_reclassify", d.parts_verified);
  check(o, "sub_specs_revalidate", revalidate);
  for (const std::string& diag : d.report.diagnostics) o.diagnostics.push_back(diag);
  return o;
}

Outcome cmd_approx(const Options& opt) {
  Outcome o;
  const io::FormSpec spec = io::parse_form(load(opt.input, o).json);
  const FiniteDirichletForm& form = spec.form;
  std::vector<Vector> vectors;
  if (!opt.u_file.empty()) {
    vectors = io::parse_vectors(load(opt.u_file, o).json, form.size(), "u");
    o.result["vectors"] = "file";
  } else {
    vectors = random_test_vectors(form, opt.vectors, opt.seed);
    o.result["vectors"] = "random";
  }
  o.tolerances["representation"] = 1e-10;
  o.tolerances["monotone_slack"] = 1e-12;

  double worst_rep = 0.0;
  bool monotone = true;
  Json runs = Json::array();
  for (std::size_t v = 0; v < vectors.size(); ++v) {
    const Vector& u = vectors[v];
    const double e = energy(form, u);
    const double slack = 1e-12 * std::max(1.0, std::abs(e));
    Json run;
    run["vector"] = v;
    run["u"] = io::to_json(u);
    run["energy"] = io::number(e);
    Json rows = Json::array();
    double previous = -INFINITY;
    for (double beta : opt.beta_grid) {
      const RepresentationCheck rc = representation_check(form, ResolventParameter{beta}, u);
      worst_rep = std::max(worst_rep, rc.residual);
      monotone = monotone && rc.lhs >= previous - slack && rc.lhs <= e + slack;
      previous = rc.lhs;
      rows.push_back({{"family", "beta"}, {"parameter", beta}, {"value", io::number(rc.lhs)},
                      {"representation", io::number(rc.rhs)}, {"residual", io::number(rc.residual)}});
    }
    previous = INFINITY;
    for (double t : opt.t_grid) {
      const RepresentationCheck rc = representation_check(form, TimeParameter{t}, u);
      worst_rep = std::max(worst_rep, rc.residual);
      monotone = monotone && rc.lhs <= previous + slack && rc.lhs <= e + slack;
      previous = rc.lhs;
      rows.push_back({{"family", "t"}, {"parameter", t}, {"value", io::number(rc.lhs)},
                      {"representation", io::number(rc.rhs)}, {"residual", io::number(rc.residual)}});
    }
    run["table"] = std::move(rows);
    runs.push_back(std::move(run));
  }
  o.result["t_grid"] = opt.t_grid;
  o.result["beta_grid"] = opt.beta_grid;
  o.result["runs"] = std::move(runs);

  const ApproxConservativeReport spaces = approx_conservative_spaces(form, opt.t_grid, opt.beta_grid);
  Json entries = Json::array();
  for (const ApproxSpaceEntry& e : spaces.entries) {
    entries.push_back({{"family", e.family == "time" ? "t" : "beta"},
                       {"parameter", e.parameter},
                       {"conservative", io::to_json(e.conservative)},
                       {"equals_x_cons", e.conservative == spaces.x_cons}});
  }
  o.result["x_cons"] = io::to_json(spaces.x_cons);
  o.result["conservative_spaces"] = std::move(entries);
  o.result["conservative_spaces_equal"] = spaces.all_equal;
  Json parts = Json::object();
  if (spaces.conservative_part) parts["conservative_worst"] = to_json(spaces.conservative_part->worst);
  if (spaces.dissipative_part) parts["dissipative_worst"] = to_json(spaces.dissipative_part->worst);
  o.result["part_convergence"] = std::move(parts);

  check(o, "representation", worst_rep <= 1e-10, io::number(worst_rep), 1e-10);
  check(o, "monotone", monotone);
  check(o, "conservative_spaces_equal", spaces.all_equal);
  check(o, "parts_converge", spaces.parts_converged);
  return o;
}

Json mosco_json(const MoscoReport& r) {
  Json j;
  j["operator"] = r.operator_name;
  j["parameter"] = r.parameter;
  j["tol"] = r.tol;
  Json rows = Json::array();
  for (std::size_t k = 0; k < r.couplings.size(); ++k) {
    rows.push_back({{"coupling", io::number(r.couplings[k])}, {"worst_residual", io::number(r.worst[k])}});
  }
  j["table"] = std::move(rows);
  j["rate"] = r.rate ? io::number(*r.rate) : Json(nullptr);
  j["monotone_residuals"] = r.monotone_residuals;
  j["converged"] = r.converged;
  j["evidence"] = r.evidence;
  return j;
}

Outcome cmd_mosco(const Options& opt) {
  Outcome o;
  const std::string& name = opt.input;
  std::optional<FormSequence> seq;
  std::vector<IndexSet> emergent_sets;
  bool expect_unit_rate = false;
  Json params;
  if (name == "delta1") {
    const std::vector<double> couplings =
        opt.couplings.empty() ? std::vector<double>{1.0, 1e1, 1e2, 1e3, 1e4} : opt.couplings;
    const double h = opt.spacing.value_or(2.0 / static_cast<double>(std::max<std::size_t>(opt.grid, 2) - 1));
    seq = delta_example_sequence(opt.grid, h, couplings);
    IndexSet left;
    for (std::size_t i = 0; i < opt.grid / 2; ++i) left.push_back(i);
    emergent_sets.push_back(std::move(left));
    expect_unit_rate = true;
    params = {{"grid", opt.grid}, {"spacing", h}, {"couplings", couplings}};
  } else if (name == "deltaZ") {
    const std::vector<double> couplings =
        opt.couplings.empty() ? std::vector<double>{1.0, 1e1, 1e2, 1e3} : opt.couplings;
    if (opt.window.size() != 2) throw Error(ErrorCode::InvalidArgument, "--window takes two integers lo,hi");
    const double h = opt.spacing.value_or(0.1);
    seq = many_delta_sequence(opt.window[0], opt.window[1], h, couplings);
    emergent_sets = integer_blocks(*seq);
    expect_unit_rate = true;
    params = {{"window", opt.window}, {"spacing", h}, {"couplings", couplings}};
  } else if (name == "vanish") {
    const double h = opt.spacing.value_or(2.0 / static_cast<double>(std::max<std::size_t>(opt.grid, 2) - 1));
    seq = vanishing_sequence(opt.grid, h, opt.scalings, opt.limit_scaling);
    params = {{"grid", opt.grid}, {"spacing", h}, {"scalings", opt.scalings}, {"limit_scaling", opt.limit_scaling}};
  } else {
    seq = io::parse_sequence(load(name, o).json);
  }
  if (o.inputs.empty()) o.inputs = "builtin:" + name + '\n' + params.dump();
  o.result["sequence"] = name;
  if (!params.is_null()) o.result["parameters"] = std::move(params);
  o.result["monotone"] = std::string(to_string(seq->monotone));
  o.result["n"] = seq->size();
  o.tolerances["convergence"] = opt.tol;

  const std::vector<Vector> vectors = random_test_vectors(seq->limit.base(), opt.vectors, opt.seed);
  const MoscoReport resolvent = resolvent_convergence(*seq, opt.beta, vectors, opt.tol);
  const MoscoReport semigroup = semigroup_convergence(*seq, opt.t, vectors, opt.tol);
  o.result["resolvent"] = mosco_json(resolvent);
  o.result["semigroup"] = mosco_json(semigroup);
  check(o, "resolvent_converged", resolvent.converged,
        resolvent.worst.empty() ? Json(nullptr) : io::number(resolvent.worst.back()), opt.tol);
  if (seq->monotone != Monotonicity::None) check(o, "residuals_monotone", resolvent.monotone_residuals);
  if (expect_unit_rate) {
    o.tolerances["rate"] = {{"target", -1.0}, {"band", 0.2}};
    const bool ok = resolvent.rate && std::abs(*resolvent.rate + 1.0) <= 0.2;
    check(o, "resolvent_rate", ok, resolvent.rate ? io::number(*resolvent.rate) : Json(nullptr), 0.2);
  }

  if (!emergent_sets.empty()) {
    Json rows = Json::array();
    double worst_limit = 0.0;
    for (const IndexSet& y : emergent_sets) {
      const EmergentInvariance e = emergent_invariance(*seq, y);
      worst_limit = std::max(worst_limit, e.limit_commutator);
      rows.push_back({{"first", y.front()},
                      {"last", y.back()},
                      {"limit_commutator", io::number(e.limit_commutator)},
                      {"min_term_commutator", io::number(e.min_term_commutator)},
                      {"term_commutators", to_json(e.term_commutators)}});
    }
    o.result["emergent_invariance"] = std::move(rows);
    o.tolerances["limit_commutator"] = 1e-9;
    check(o, "limit_invariant", worst_limit <= 1e-9, io::number(worst_limit), 1e-9);
  }
  if (seq->monotone == Monotonicity::Increasing) {
    const M1SpotCheck m1 = m1_spot_check(*seq, vectors);
    o.result["m1_spot_check"] = {{"limit_energy", to_json(m1.limit_energy)},
                                 {"last_term_energy", to_json(m1.last_term_energy)}};
    check(o, "m1_lower_bound", m1.passed);
  }
  return o;
}

Json end_json(const char* which, const std::optional<EndpointReport>& e, const FellerEnd& f) {
  Json j;
  j["end"] = which;
  if (e) {
    j["position"] = io::number(e->position);
    j["s_limit"] = to_string(e->s_limit);
    j["approachable"] = e->approachable;
    j["m_finite"] = e->m_finite;
    j["regular"] = e->regular;
    j["boundary"] = std::string(to_string(e->boundary));
  }
  if (f.integral) {
    j["feller_integral"] = f.integral->finite ? "finite" : "divergent";
    j["feller_value"] = f.integral->finite ? io::number(f.integral->value) : Json(nullptr);
  } else {
    j["feller_integral"] = "ambiguous";
  }
  j["explosive"] = f.explosive;
  j["feller_evidence"] = f.evidence;
  return j;
}

Outcome cmd_diffusion(const Options& opt) {
  Outcome o;
  const std::string& name = opt.input;
  DiffusionReport report;
  if (name == "example5.1") {
    o.inputs = "builtin:" + name;
    report = example_5_1();
  } else if (name.rfind("example5.2:", 0) == 0) {
    o.inputs = "builtin:" + name;
    const std::string rest = name.substr(11);
    BirthDeathSpec atoms;
    if (rest.rfind("power:", 0) == 0) {
      atoms.family = BirthDeathSpec::Family::Power;
      try {
        std::size_t used = 0;
        atoms.p = std::stod(rest.substr(6), &used);
        if (used != rest.size() - 6) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidSpec, "example5.2:power:<p> needs a number, got \"" + rest.substr(6) + "\"");
      }
    } else if (rest.rfind("custom:", 0) == 0) {
      atoms.family = BirthDeathSpec::Family::Custom;
      atoms.custom = Expression::parse(rest.substr(7));
    } else {
      throw Error(ErrorCode::InvalidSpec, "expected example5.2:power:<p> or example5.2:custom:<expr>");
    }
    report = example_5_2(atoms);
  } else {
    const io::DiffusionFile file = io::parse_diffusion(load(name, o).json);
    report = diffusion_report(file.spec);
    if (file.birth_death) attach_birth_death(report, *file.birth_death, "J", file.transient_by_assumption);
  }

  Json intervals = Json::array();
  for (const IntervalReport& item : report.intervals) {
    intervals.push_back({{"name", item.name},
                         {"recurrence", std::string(to_string(item.recurrence.verdict))},
                         {"feller", item.feller.conservative ? Json(*item.feller.conservative ? "conservative" : "explosive")
                                                            : Json("withheld")},
                         {"total_mass", item.total_mass ? io::number(*item.total_mass) : Json("inf")},
                         {"ends", Json::array({end_json("lower", item.recurrence.lower, item.feller.lower),
                                               end_json("upper", item.recurrence.upper, item.feller.upper)})},
                         {"evidence", item.recurrence.evidence}});
  }
  o.result["spec"] = name;
  o.result["intervals"] = std::move(intervals);
  if (report.discrete) {
    const BirthDeathReport& bd = *report.discrete;
    Json sums = Json::array();
    for (const auto& [n, s] : bd.partial_sums) sums.push_back({{"N", n}, {"sum a_k/k", io::number(s)}});
    o.result["discrete"] = {{"name", report.discrete_name},
                            {"series", std::string(to_string(bd.series))},
                            {"mass", std::string(to_string(bd.mass))},
                            {"conservative", bd.conservative ? Json(*bd.conservative) : Json(nullptr)},
                            {"partial_sums", std::move(sums)},
                            {"evidence", bd.evidence}};
  }
  o.result["rec"] = report.rec;
  o.result["trans"] = report.trans;
  o.result["cons"] = report.cons;
  o.result["diss"] = report.diss;
  o.result["whole_space_conservative"] = report.whole_space_conservative;
  o.result["transient_part_conservative"] = report.transient_part_conservative;
  o.result["transient_by_assumption"] = report.transient_by_assumption;

  bool classified = std::none_of(report.intervals.begin(), report.intervals.end(), [](const IntervalReport& i) {
    return i.recurrence.verdict == Recurrence::Unclassified || !i.feller.conservative;
  });
  if (report.discrete) classified = classified && report.discrete->conservative.has_value();
  check(o, "all_pieces_classified", classified);
  check(o, "recurrent_implies_conservative",
        std::all_of(report.rec.begin(), report.rec.end(), [&](const std::string& piece) {
          return std::find(report.cons.begin(), report.cons.end(), piece) != report.cons.end();
        }));
  for (const std::string& d : report.diagnostics) o.diagnostics.push_back(d);
  return o;
}

Outcome cmd_heat(const Options& opt) {
  Outcome o;
  const io::FormSpec spec = io::parse_form(load(opt.input, o).json);
  const FiniteDirichletForm& form = spec.form;
  if (opt.u_file.empty()) throw Error(ErrorCode::InvalidArgument, "heat needs --u0 <file>");
  const Vector u0 = io::parse_vector(load(opt.u_file, o).json, form.size(), "u0");
  const std::vector<MeasuredVector> path = heat_evolve(form, u0, opt.times);

  std::vector<double> positive_times;
  for (double t : opt.times)
    if (t > 0.0) positive_times.push_back(t);
  const bool nonnegative = (u0.array() >= 0.0).all();
  const bool excessive = nonnegative && !positive_times.empty() && is_excessive(form, u0, positive_times);
  std::optional<ExcessiveResiduals> residuals;
  if (excessive) residuals = excessive_decomposition_check(form, u0, opt.times);

  Json rows = Json::array();
  for (std::size_t k = 0; k < path.size(); ++k) {
    Json row;
    row["t"] = opt.times[k];
    row["u"] = io::to_json(path[k].values());
    row["residual"] = residuals ? io::number(residuals->residuals[k]) : Json(nullptr);
    rows.push_back(std::move(row));
  }
  o.result["excessive"] = excessive;
  o.result["trajectory"] = std::move(rows);
  if (residuals) {
    const double tol = 1e-10 * std::max(1.0, u0.cwiseAbs().maxCoeff());
    o.tolerances["excessive_residual"] = tol;
    const double worst = *std::max_element(residuals->residuals.begin(), residuals->residuals.end());
    o.result["lower_bound_violation"] = io::number(residuals->lower_bound_violation);
    check(o, "excessive_residual", worst <= tol, io::number(worst), tol);
    check(o, "lower_bound", residuals->lower_bound_violation <= tol, io::number(residuals->lower_bound_violation), tol);
  }
  return o;
}

Outcome cmd_trace(const Options& opt) {
  Outcome o;
  const io::FormSpec spec = io::parse_form(load(opt.input, o).json);
  const FiniteDirichletForm& form = spec.form;
  IndexSet subset = opt.subset;
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  const FiniteDirichletForm trace = trace_form(form, subset);
  const Json labels = sublabels(spec.labels, subset);
  const Json emitted =
      io::form_to_json(trace, labels.is_null() ? std::vector<std::string>{} : labels.get<std::vector<std::string>>());
  const bool invariant = structurally_invariant(form, subset);
  o.result["subset"] = io::to_json(subset);
  o.result["invariant"] = invariant;
  o.result["trace"] = emitted;
  check(o, "sub_spec_revalidates", same_form(io::parse_form(emitted).form, trace));
  if (invariant) check(o, "equals_part_form", same_form(trace, part_form(form, subset).form));
  return o;
}

// --- rendering ----------------------------------------------------------------

std::string cell(const Json& v) {
  if (v.is_null()) return "-";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  std::string out;
  if (v.is_array()) {
    out = "[";
    constexpr std::size_t kShown = 12;
    for (std::size_t i = 0; i < v.size() && i < kShown; ++i) out += (i ? ", " : "") + cell(v[i]);
    if (v.size() > kShown) out += ", ... (" + std::to_string(v.size()) + " entries)";
    return out + "]";
  }
  out = "{";
  bool first = true;
  for (const auto& [k, x] : v.items()) {
    out += (first ? "" : ", ") + k + ": " + cell(x);
    first = false;
  }
  return out + "}";
}

bool is_table(const Json& v) {
  return v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_object(); });
}

void render_rows(std::ostream& os, const Json& rows, const std::string& title) {
  // Columns holding tables of their own are rendered below, one per row.
  std::vector<std::string> columns, nested;
  for (const Json& r : rows)
    for (const auto& [k, x] : r.items()) {
      auto& into = is_table(x) ? nested : columns;
      if (std::find(into.begin(), into.end(), k) == into.end()) into.push_back(k);
    }
  columns.erase(std::remove_if(columns.begin(), columns.end(),
                               [&](const std::string& c) {
                                 return std::find(nested.begin(), nested.end(), c) != nested.end();
                               }),
                columns.end());
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width;
  for (const std::string& c : columns) width.push_back(c.size());
  for (const Json& r : rows) {
    std::vector<std::string> line;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto it = r.find(columns[c]);
      std::string s = it == r.end() ? "" : cell(*it);
      if (columns[c] == "passed" && it != r.end() && it->is_boolean()) s = it->get<bool>() ? "PASS" : "FAIL";
      width[c] = std::max(width[c], s.size());
      line.push_back(std::move(s));
    }
    cells.push_back(std::move(line));
  }
  auto emit = [&](const std::vector<std::string>& line) {
    os << "  ";
    for (std::size_t c = 0; c < line.size(); ++c) {
      os << line[c];
      if (c + 1 < line.size()) os << std::string(width[c] - line[c].size() + 2, ' ');
    }
    os << "\n";
  };
  emit(columns);
  for (const auto& line : cells) emit(line);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const std::string& k : nested) {
      const auto it = rows[r].find(k);
      if (it == rows[r].end() || !is_table(*it)) continue;
      const std::string sub = title + "[" + std::to_string(r) + "]." + k;
      os << "  " << sub << ":\n";
      render_rows(os, *it, sub);
    }
  }
}

void render_object(std::ostream& os, const Json& obj, const std::string& prefix) {
  std::vector<std::pair<std::string, std::string>> scalars;
  std::vector<std::pair<std::string, const Json*>> nested;
  for (const auto& [k, v] : obj.items()) {
    if (v.is_object() || is_table(v)) {
      nested.emplace_back(prefix + k, &v);
    } else {
      scalars.emplace_back(prefix + k, cell(v));
    }
  }
  std::size_t w = 0;
  for (const auto& [k, v] : scalars) w = std::max(w, k.size());
  for (const auto& [k, v] : scalars) os << "  " << k << std::string(w - k.size() + 2, ' ') << v << "\n";
  for (const auto& [k, v] : nested) {
    if (v->is_object()) {
      render_object(os, *v, k + ".");
    } else {
      os << "  " << k << ":\n";
      render_rows(os, *v, k);
    }
  }
}

}  // namespace

std::string render_table(const Json& report) {
  std::ostringstream os;
  os << "dform " << report.value("command", "?") << "  (schema " << report.value("schema_version", 0) << ", digest "
     << report.value("input_digest", "") << ", seed " << report.value("seed", std::uint64_t{0}) << ")\n";
  if (report.contains("result")) {
    os << "result\n";
    render_object(os, report["result"], "");
  }
  if (report.contains("checks") && !report["checks"].empty()) {
    os << "checks\n";
    render_rows(os, report["checks"], "checks");
  }
  if (report.contains("diagnostics") && !report["diagnostics"].empty()) {
    os << "diagnostics\n";
    for (const Json& d : report["diagnostics"]) os << "  " << cell(d) << "\n";
  }
  if (report.contains("status")) os << "status  " << cell(report["status"]) << "\n";
  return os.str();
}

namespace {

bool numeric_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPSDForm:
    case ErrorCode::NonStabilizingLimit:
    case ErrorCode::AmbiguousTail:
    case ErrorCode::EvaluationFailure:
      return true;
    default:
      return false;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dirichlet forms on finite graphs and 1D diffusions: classification, decomposition, "
               "approximation and Mosco convergence reports",
               "dform"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--out", opt.out_path, "Write the JSON report here and the table to stdout");
  app.add_option("--seed", opt.seed, "Seed for random test vectors")->capture_default_str();
  app.add_flag("--timing", opt.timing, "Add wall-clock time to the report");

  auto* classify_cmd = app.add_subcommand("classify", "Classify vertices into recurrent/dissipative/conservative parts");
  classify_cmd->add_option("form", opt.input, "Form spec file")->required();
  classify_cmd->add_option("--rho", opt.rho_file, "File with a strictly positive vector rho");

  auto* decompose_cmd = app.add_subcommand("decompose", "Split a form into recurrent, dissipative and "
                                                        "transient-conservative parts");
  decompose_cmd->add_option("form", opt.input, "Form spec file")->required();

  auto* approx_cmd = app.add_subcommand("approx", "Tables of E^(t)[u], E^(beta)[u] and conservative spaces");
  approx_cmd->add_option("form", opt.input, "Form spec file")->required();
  approx_cmd->add_option("--t-grid", opt.t_grid, "Times t")->delimiter(',')->capture_default_str();
  approx_cmd->add_option("--beta-grid", opt.beta_grid, "Resolvent parameters beta")->delimiter(',')->capture_default_str();
  approx_cmd->add_option("--u", opt.u_file, "File with one vector or a list of vectors");
  approx_cmd->add_option("--vectors", opt.vectors, "Random vectors when --u is absent")->capture_default_str();

  auto* mosco_cmd = app.add_subcommand("mosco", "Resolvent and semigroup convergence of a form sequence");
  mosco_cmd->add_option("sequence", opt.input, "Sequence file, or builtin delta1 | deltaZ | vanish")->required();
  mosco_cmd->add_option("--grid", opt.grid, "Nodes of the path graph (odd)")->capture_default_str();
  mosco_cmd->add_option("--spacing", opt.spacing, "Grid spacing h");
  mosco_cmd->add_option("--couplings", opt.couplings, "Killing strengths of the terms")->delimiter(',');
  mosco_cmd->add_option("--scalings", opt.scalings, "Edge scalings of the vanish terms")->delimiter(',')->capture_default_str();
  mosco_cmd->add_option("--limit-scaling", opt.limit_scaling, "Edge scaling of the vanish limit")->capture_default_str();
  mosco_cmd->add_option("--window", opt.window, "Integer window lo,hi of deltaZ")->delimiter(',')->capture_default_str();
  mosco_cmd->add_option("--beta", opt.beta, "Resolvent parameter")->capture_default_str();
  mosco_cmd->add_option("--t", opt.t, "Semigroup time")->capture_default_str();
  mosco_cmd->add_option("--tol", opt.tol, "Convergence tolerance")->capture_default_str();
  mosco_cmd->add_option("--vectors", opt.vectors, "Random test vectors")->capture_default_str();

  auto* diffusion_cmd = app.add_subcommand("diffusion", "Recurrence and Feller classification of a 1D diffusion");
  diffusion_cmd->add_option("spec", opt.input, "Spec file, or builtin example5.1 | example5.2:power:<p> | "
                                               "example5.2:custom:<expr in k>")->required();

  auto* heat_cmd = app.add_subcommand("heat", "Heat evolution T_t u0 with the excessive-data residual");
  heat_cmd->add_option("form", opt.input, "Form spec file")->required();
  heat_cmd->add_option("--u0", opt.u_file, "File with the initial vector")->required();
  heat_cmd->add_option("--times", opt.times, "Time grid starting at 0")->delimiter(',')->capture_default_str();

  auto* trace_cmd = app.add_subcommand("trace", "Trace (Schur complement) of a form on a vertex subset");
  trace_cmd->add_option("form", opt.input, "Form spec file")->required();
  trace_cmd->add_option("--subset", opt.subset, "Vertices kept")->delimiter(',')->required();

  // CLI11 consumes its argument vector from the back
  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  try {
    if (command == "classify") {
      outcome = cmd_classify(opt);
    } else if (command == "decompose") {
      outcome = cmd_decompose(opt);
    } else if (command == "approx") {
      outcome = cmd_approx(opt);
    } else if (command == "mosco") {
      outcome = cmd_mosco(opt);
    } else if (command == "diffusion") {
      outcome = cmd_diffusion(opt);
    } else if (command == "heat") {
      outcome = cmd_heat(opt);
    } else {
      outcome = cmd_trace(opt);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return numeric_code(e.code()) ? kNumericDiagnostic : kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericDiagnostic;
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  // The digest covers the command line (minus --out) and every input byte.
  std::string echo;
  Json arguments = Json::array();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--out") {
      ++i;
      continue;
    }
    if (args[i].rfind("--out=", 0) == 0) continue;
    arguments.push_back(args[i]);
    echo += args[i];
    echo.push_back('\0');
  }
  const bool failed = std::any_of(outcome.checks.begin(), outcome.checks.end(),
                                  [](const Json& c) { return !c["passed"].get<bool>(); });
  const bool flagged = failed || !outcome.diagnostics.empty();

  Json report;
  report["schema_version"] = kSchemaVersion;
  report["command"] = command;
  report["arguments"] = std::move(arguments);
  report["input_digest"] = "fnv1a64:" + io::hex64(io::fnv1a64(echo + outcome.inputs));
  report["seed"] = opt.seed;
  report["tolerances"] = std::move(outcome.tolerances);
  report["result"] = std::move(outcome.result);
  report["checks"] = std::move(outcome.checks);
  report["diagnostics"] = outcome.diagnostics;
  report["status"] = flagged ? "diagnostic" : "ok";
  if (opt.timing) report["wall_time_s"] = elapsed;

  const std::string json = report.dump(2) + "\n";
  if (opt.out_path.empty()) {
    out << json;
    err << render_table(report);
  } else {
    std::ofstream file(opt.out_path, std::ios::binary);
    if (!file) {
      err << "error: cannot write " << opt.out_path << "\n";
      return kInputError;
    }
    file << json;
    out << render_table(report);
  }
  return flagged ? kNumericDiagnostic : kOk;
}

}  // namespace dform::cli
