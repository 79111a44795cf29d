#include "dform/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dform::io {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::InvalidSpec, (where.empty() ? std::string("document") : where) + ": " + what);
}

std::string path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

std::string path(const std::string& where, std::size_t i) { return where + "[" + std::to_string(i) + "]"; }

const Json& field(const Json& j, const std::string& where, const std::string& key) {
  if (!j.is_object()) bad(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) bad(where, "missing field \"" + key + "\"");
  return *it;
}

const Json* optional_field(const Json& j, const std::string& key) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

// Numbers, or the strings "inf" / "-inf" / "+inf".
double read_number(const Json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-infinity") return -std::numeric_limits<double>::infinity();
  }
  bad(where, "expected a number");
}

double read_finite(const Json& j, const std::string& where) {
  const double v = read_number(j, where);
  if (!std::isfinite(v)) bad(where, "expected a finite number");
  return v;
}

std::size_t read_index(const Json& j, const std::string& where, std::size_t n) {
  if (!j.is_number_integer()) bad(where, "expected an integer vertex index");
  const auto v = j.get<long long>();
  if (v < 0 || static_cast<unsigned long long>(v) >= n) {
    throw Error(ErrorCode::IndexOutOfRange,
                where + ": vertex " + std::to_string(v) + " out of range [0, " + std::to_string(n) + ")");
  }
  return static_cast<std::size_t>(v);
}

bool read_bool(const Json& j, const std::string& where) {
  if (!j.is_boolean()) bad(where, "expected true or false");
  return j.get<bool>();
}

std::string read_string(const Json& j, const std::string& where) {
  if (!j.is_string()) bad(where, "expected a string");
  return j.get<std::string>();
}

Vector read_array(const Json& j, const std::string& where, std::size_t n) {
  if (!j.is_array()) bad(where, "expected an array of numbers");
  if (j.size() != n) {
    throw Error(ErrorCode::DimensionMismatch,
                where + ": expected " + std::to_string(n) + " entries, got " + std::to_string(j.size()));
  }
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = read_finite(j[i], path(where, i));
  return v;
}

Expression read_expression(const Json& j, const std::string& where) {
  const std::string text = read_string(j, where);
  try {
    return Expression::parse(text);
  } catch (const Error& e) {
    bad(where, e.what());
  }
}

ScaleLimit read_scale_limit(const Json& j, const std::string& where) {
  const double v = read_number(j, where);
  if (std::isnan(v)) bad(where, "expected a number");
  if (v == std::numeric_limits<double>::infinity()) return ScaleLimit::plus_infinity();
  if (v == -std::numeric_limits<double>::infinity()) return ScaleLimit::minus_infinity();
  return ScaleLimit::of(v);
}

Boundary read_boundary(const Json& j, const std::string& where) {
  const std::string s = read_string(j, where);
  if (s == "reflecting") return Boundary::Reflecting;
  if (s == "open") return Boundary::Open;
  bad(where, "expected \"reflecting\" or \"open\", got \"" + s + "\"");
}

}  // namespace

Json parse_json(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // locate the byte offset as line:column for the message
    std::size_t line = 1, column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream msg;
    msg << source << ":" << line << ":" << column << ": " << e.what();
    throw Error(ErrorCode::ParseError, msg.str());
  }
}

Document read_document(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidSpec, "cannot open " + file);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  Document doc;
  doc.text = buffer.str();
  doc.json = parse_json(doc.text, file);
  return doc;
}

FormSpec parse_form(const Json& j, const std::string& where) {
  const Json& jn = field(j, where, "n");
  if (!jn.is_number_integer() || jn.get<long long>() < 1) bad(path(where, "n"), "expected a positive integer");
  const auto n = static_cast<std::size_t>(jn.get<long long>());

  std::vector<Edge> edges;
  const std::string ewhere = path(where, "edges");
  const Json& je = field(j, where, "edges");
  if (!je.is_array()) bad(ewhere, "expected an array of [i, j, w] triples");
  for (std::size_t e = 0; e < je.size(); ++e) {
    const std::string here = path(ewhere, e);
    const Json& t = je[e];
    if (!t.is_array() || t.size() != 3) bad(here, "expected [i, j, w]");
    const std::size_t a = read_index(t[0], path(here, 0), n);
    const std::size_t b = read_index(t[1], path(here, 1), n);
    const double w = read_finite(t[2], path(here, 2));
    if (a == b) bad(here, "self-loop at vertex " + std::to_string(a));
    if (w < 0.0) throw Error(ErrorCode::NegativeEntry, path(here, 2) + ": weight must be >= 0");
    edges.push_back({a, b, w});
  }

  Vector killing = Vector::Zero(static_cast<Eigen::Index>(n));
  if (const Json* jk = optional_field(j, "killing")) killing = read_array(*jk, path(where, "killing"), n);
  Vector measure = Vector::Ones(static_cast<Eigen::Index>(n));
  if (const Json* jm = optional_field(j, "measure")) measure = read_array(*jm, path(where, "measure"), n);

  FormSpec spec{FiniteDirichletForm::from_edges(n, std::move(edges), killing, measure), {}};
  if (const Json* jl = optional_field(j, "labels")) {
    const std::string lwhere = path(where, "labels");
    if (!jl->is_array() || jl->size() != n) bad(lwhere, "expected " + std::to_string(n) + " strings");
    for (std::size_t i = 0; i < n; ++i) spec.labels.push_back(read_string((*jl)[i], path(lwhere, i)));
  }
  return spec;
}

Json form_to_json(const FiniteDirichletForm& form, const std::vector<std::string>& labels) {
  Json j;
  j["n"] = form.size();
  Json edges = Json::array();
  for (const Edge& e : form.edges()) edges.push_back(Json::array({e.i, e.j, e.weight}));
  j["edges"] = std::move(edges);
  j["killing"] = to_json(form.killing());
  j["measure"] = to_json(form.measure());
  if (!labels.empty()) j["labels"] = labels;
  return j;
}

Vector parse_vector(const Json& j, std::size_t n, const std::string& key) {
  if (j.is_object()) return read_array(field(j, "", key), key, n);
  return read_array(j, key, n);
}

std::vector<Vector> parse_vectors(const Json& j, std::size_t n, const std::string& key) {
  const Json& arr = j.is_object() ? field(j, "", key) : j;
  if (!arr.is_array() || arr.empty()) bad(key, "expected a vector or a list of vectors");
  if (!arr[0].is_array()) return {read_array(arr, key, n)};
  std::vector<Vector> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(read_array(arr[i], path(key, i), n));
  return out;
}

IndexSet parse_index_set(const Json& j, std::size_t n, const std::string& where) {
  if (!j.is_array()) bad(where, "expected an array of vertex indices");
  IndexSet out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_index(j[i], path(where, i), n));
  return out;
}

FormSequence parse_sequence(const Json& j) {
  const Json& jt = field(j, "", "terms");
  if (!jt.is_array() || jt.empty()) bad("terms", "expected a nonempty array of forms");
  std::vector<FiniteDirichletForm> terms;
  for (std::size_t k = 0; k < jt.size(); ++k) terms.push_back(parse_form(jt[k], path("terms", k)).form);
  const std::size_t n = terms.front().size();

  std::vector<double> couplings;
  if (const Json* jc = optional_field(j, "couplings")) {
    const Vector c = read_array(*jc, "couplings", terms.size());
    couplings.assign(c.data(), c.data() + c.size());
  } else {
    for (std::size_t k = 0; k < terms.size(); ++k) couplings.push_back(static_cast<double>(k + 1));
  }

  const Json& jl = field(j, "", "limit");
  FormSpec limit = parse_form(field(jl, "limit", "form"), "limit.form");
  IndexSet constraint;
  if (const Json* jcs = optional_field(jl, "constraint")) constraint = parse_index_set(*jcs, n, "limit.constraint");

  Monotonicity tag = Monotonicity::None;
  if (const Json* jm = optional_field(j, "monotone")) {
    const std::string s = read_string(*jm, "monotone");
    if (s == "increasing") {
      tag = Monotonicity::Increasing;
    } else if (s == "decreasing") {
      tag = Monotonicity::Decreasing;
    } else if (s != "none") {
      bad("monotone", "expected \"increasing\", \"decreasing\" or \"none\"");
    }
  }
  std::vector<double> positions;
  if (const Json* jp = optional_field(j, "positions")) {
    const Vector p = read_array(*jp, "positions", n);
    positions.assign(p.data(), p.data() + p.size());
  }
  return FormSequence::make(std::move(terms), std::move(couplings),
                            WideSenseForm(limit.form, std::move(constraint)), tag, std::move(positions));
}

BirthDeathSpec parse_birth_death(const Json& j, const std::string& where) {
  BirthDeathSpec spec;
  const std::string family = read_string(field(j, where, "family"), path(where, "family"));
  if (family == "power") {
    spec.family = BirthDeathSpec::Family::Power;
    spec.p = read_finite(field(j, where, "p"), path(where, "p"));
    if (const Json* jc = optional_field(j, "coefficient")) spec.coefficient = read_finite(*jc, path(where, "coefficient"));
    if (!(spec.coefficient > 0.0)) throw Error(ErrorCode::NonpositiveAtom, path(where, "coefficient") + ": must be > 0");
  } else if (family == "custom") {
    spec.family = BirthDeathSpec::Family::Custom;
    spec.custom = read_expression(field(j, where, "a_k"), path(where, "a_k"));
  } else {
    bad(path(where, "family"), "expected \"power\" or \"custom\"");
  }
  if (const Json* js = optional_field(j, "start")) {
    if (!js->is_number_integer() || js->get<long long>() < 1) bad(path(where, "start"), "expected a positive integer");
    spec.start = static_cast<std::size_t>(js->get<long long>());
  }
  return spec;
}

DiffusionFile parse_diffusion(const Json& j) {
  DiffusionFile file;
  DiffusionSpec& spec = file.spec;
  spec.scale = read_expression(field(j, "", "scale"), "scale");
  spec.speed_density = read_expression(field(j, "", "speed_density"), "speed_density");

  const Json& ji = field(j, "", "intervals");
  if (!ji.is_array() || ji.empty()) bad("intervals", "expected a nonempty array");
  for (std::size_t i = 0; i < ji.size(); ++i) {
    const std::string here = path("intervals", i);
    const Json& jv = ji[i];
    DiffusionInterval iv;
    iv.name = jv.contains("name") ? read_string(jv["name"], path(here, "name")) : "I" + std::to_string(i + 1);
    iv.lo = read_number(field(jv, here, "lo"), path(here, "lo"));
    iv.hi = read_number(field(jv, here, "hi"), path(here, "hi"));
    if (const Json* b = optional_field(jv, "lo_included")) iv.lo_included = read_bool(*b, path(here, "lo_included"));
    if (const Json* b = optional_field(jv, "hi_included")) iv.hi_included = read_bool(*b, path(here, "hi_included"));
    if (const Json* c = optional_field(jv, "reference")) iv.reference = read_finite(*c, path(here, "reference"));
    if (const Json* s = optional_field(jv, "scale_at_lo")) iv.scale_at_lo = read_scale_limit(*s, path(here, "scale_at_lo"));
    if (const Json* s = optional_field(jv, "scale_at_hi")) iv.scale_at_hi = read_scale_limit(*s, path(here, "scale_at_hi"));
    if (const Json* b = optional_field(jv, "lo_boundary")) iv.lo_boundary = read_boundary(*b, path(here, "lo_boundary"));
    if (const Json* b = optional_field(jv, "hi_boundary")) iv.hi_boundary = read_boundary(*b, path(here, "hi_boundary"));
    spec.intervals.push_back(std::move(iv));
  }
  if (const Json* ja = optional_field(j, "atoms")) {
    if (!ja->is_array()) bad("atoms", "expected an array of {\"x\", \"mass\"}");
    for (std::size_t i = 0; i < ja->size(); ++i) {
      const std::string here = path("atoms", i);
      spec.atoms.push_back({read_finite(field((*ja)[i], here, "x"), path(here, "x")),
                            read_finite(field((*ja)[i], here, "mass"), path(here, "mass"))});
    }
  }
  if (const Json* jb = optional_field(j, "birth_death")) file.birth_death = parse_birth_death(*jb, "birth_death");
  if (const Json* jt = optional_field(j, "transient_by_assumption"))
    file.transient_by_assumption = read_bool(*jt, "transient_by_assumption");
  spec.validate();
  return file;
}

Json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

Json to_json(const IndexSet& s) {
  Json out = Json::array();
  for (std::size_t i : s) out.push_back(i);
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace dform::io
