#pragma once

// JSON schemas for the command-line tool. Every reader reports the JSON path
// of the offending field ("edges[3][1]: ...") through Error(InvalidSpec).

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dform/diffusion.hpp"
#include "dform/mosco.hpp"

namespace dform::io {

using Json = nlohmann::ordered_json;

/// Parsed form file: {"n", "edges": [[i, j, w], ...], "killing", "measure", "labels"?}.
struct FormSpec {
  FiniteDirichletForm form;
  std::vector<std::string> labels;  ///< empty when the file has none
};

/// File contents plus the parsed document; ParseError carries line and column.
struct Document {
  std::string text;
  Json json;
};

Document read_document(const std::string& path);
Json parse_json(std::string_view text, const std::string& source);

FormSpec parse_form(const Json& j, const std::string& where = "");
Json form_to_json(const FiniteDirichletForm& form, const std::vector<std::string>& labels = {});

/// A bare array, or an object holding the array under `key`.
Vector parse_vector(const Json& j, std::size_t n, const std::string& key);
/// One vector or a list of vectors.
std::vector<Vector> parse_vectors(const Json& j, std::size_t n, const std::string& key);
IndexSet parse_index_set(const Json& j, std::size_t n, const std::string& where);

/// {"terms": [form...], "couplings": [...], "limit": {"form": form, "constraint": [...]},
///  "monotone": "increasing" | "decreasing" | "none"}
FormSequence parse_sequence(const Json& j);

/// {"scale": expr, "speed_density": expr, "intervals": [...], "atoms": [...],
///  "birth_death": {"family": "power", "p", "coefficient"?} | {"family": "custom", "a_k"}?,
///  "transient_by_assumption": bool?}
struct DiffusionFile {
  DiffusionSpec spec;
  std::optional<BirthDeathSpec> birth_death;
  bool transient_by_assumption = false;
};
DiffusionFile parse_diffusion(const Json& j);
BirthDeathSpec parse_birth_death(const Json& j, const std::string& where);

/// JSON value for a double; non-finite values become "inf", "-inf" or "nan".
Json number(double v);
Json to_json(const Vector& v);
Json to_json(const IndexSet& s);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace dform::io
