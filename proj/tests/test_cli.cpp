#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "dform/cli.hpp"

using namespace dform;
using io::Json;

namespace {

namespace fs = std::filesystem;

class Workspace {
 public:
  Workspace() : root_(fs::temp_directory_path() / ("dform_cli_test_" + std::to_string(::getpid()))) {
    fs::create_directories(root_);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root_, ec);
  }
  std::string write(const std::string& name, const std::string& text) const {
    const fs::path p = root_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string path(const std::string& name) const { return (root_ / name).string(); }

 private:
  fs::path root_;
};

struct Outcome {
  int code;
  std::string out, err;
  Json json() const { return Json::parse(out); }
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "dform");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const Json* check_named(const Json& report, const std::string& name) {
  for (const Json& c : report["checks"])
    if (c["name"] == name) return &c;
  return nullptr;
}

const char* kMixed =
    R"({"n": 5, "edges": [[0,1,1.0],[1,2,2.0],[3,4,1.5]], "killing": [0,0,0,0.5,0],
        "measure": [1,2,1,1,3], "labels": ["a","b","c","d","e"]})";
const char* kTwo = R"({"n": 2, "edges": [[0, 1, 1.0]]})";
const char* kPath = R"({"n": 3, "edges": [[0,1,1],[1,2,1]]})";

}  // namespace

TEST_CASE("classify reports the decomposition and its envelope") {
  Workspace ws;
  const auto r = invoke({"classify", ws.write("mixed.json", kMixed)});
  REQUIRE(r.code == cli::kOk);
  const Json j = r.json();
  CHECK(j["schema_version"] == cli::kSchemaVersion);
  CHECK(j["command"] == "classify");
  CHECK(j["seed"] == cli::kDefaultSeed);
  CHECK(j["status"] == "ok");
  CHECK(j["input_digest"].get<std::string>().rfind("fnv1a64:", 0) == 0);
  CHECK_FALSE(j.contains("wall_time_s"));
  CHECK(j["result"]["x_rec"] == Json::array({0, 1, 2}));
  CHECK(j["result"]["x_diss"] == Json::array({3, 4}));
  CHECK(j["result"]["x_tc"].empty());
  CHECK(j["result"]["vertices"][0]["green"] == "inf");
  CHECK(j["result"]["vertices"][3]["green"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  for (const Json& c : j["checks"]) CHECK(c["passed"] == true);
  // the table goes to the error stream when JSON is on stdout
  CHECK(r.err.find("x_rec") != std::string::npos);
  CHECK(r.err.find("PASS") != std::string::npos);
}

TEST_CASE("reports are byte-identical across runs and echo the seed") {
  Workspace ws;
  const std::string form = ws.write("mixed.json", kMixed);
  const auto a = invoke({"--seed", "7", "decompose", form});
  const auto b = invoke({"--seed", "7", "decompose", form});
  REQUIRE(a.code == cli::kOk);
  CHECK(a.out == b.out);
  CHECK(a.json()["seed"] == 7);
  const auto c = invoke({"decompose", form});
  CHECK(c.json()["input_digest"] != a.json()["input_digest"]);
  const auto timed = invoke({"--timing", "decompose", form});
  CHECK(timed.json()["wall_time_s"].is_number());
}

TEST_CASE("--out writes JSON to the file and the table to stdout") {
  Workspace ws;
  const std::string target = ws.path("report.json");
  const auto r = invoke({"--out", target, "classify", ws.write("two.json", kTwo)});
  REQUIRE(r.code == cli::kOk);
  std::ifstream in(target);
  const Json j = Json::parse(in);
  CHECK(j["result"]["x_rec"] == Json::array({0, 1}));
  CHECK(r.out.find("x_rec") != std::string::npos);
  CHECK(r.err.empty());
  for (const Json& arg : j["arguments"]) CHECK(arg != "--out");
}

TEST_CASE("decompose emits parts that reclassify consistently") {
  Workspace ws;
  const auto r = invoke({"decompose", ws.write("mixed.json", kMixed)});
  REQUIRE(r.code == cli::kOk);
  const Json parts = r.json()["result"]["parts"];
  CHECK(parts["recurrent"]["vertices"] == Json::array({0, 1, 2}));
  CHECK(parts["dissipative"]["vertices"] == Json::array({3, 4}));
  CHECK(parts["transient_conservative"]["form"].is_null());
  // a part is itself a valid form file
  const std::string sub = ws.write("rec.json", parts["recurrent"]["form"].dump());
  const auto again = invoke({"classify", sub});
  REQUIRE(again.code == cli::kOk);
  CHECK(again.json()["result"]["x_rec"] == Json::array({0, 1, 2}));
  CHECK(r.json()["result"]["energy_sum_residual"] == 0.0);
}

TEST_CASE("approx reproduces the two-point closed form") {
  Workspace ws;
  const auto r = invoke({"approx", ws.write("two.json", kTwo), "--u", ws.write("u.json", "[1, -1]"), "--beta-grid",
                         "0.5,2,8"});
  REQUIRE(r.code == cli::kOk);
  const Json run = r.json()["result"]["runs"][0];
  CHECK(run["energy"].get<double>() == doctest::Approx(4.0).epsilon(1e-14));
  for (const Json& row : run["table"]) {
    if (row["family"] != "beta") continue;
    const double beta = row["parameter"];
    CHECK(row["value"].get<double>() == doctest::Approx(4.0 * beta / (beta + 2.0)).epsilon(1e-12));
  }
}

TEST_CASE("mosco on the point interaction converges at rate one") {
  const auto r = invoke({"mosco", "delta1", "--couplings", "1,10,100,1000", "--grid", "101"});
  REQUIRE(r.code == cli::kOk);
  const Json j = r.json();
  const Json* rate = check_named(j, "resolvent_rate");
  REQUIRE(rate != nullptr);
  CHECK((*rate)["value"].get<double>() == doctest::Approx(-1.0).epsilon(0.2));
  CHECK(check_named(j, "limit_invariant")->at("passed") == true);
}

TEST_CASE("diffusion example reports") {
  const auto r = invoke({"diffusion", "example5.1"});
  REQUIRE(r.code == cli::kOk);
  const Json res = r.json()["result"];
  CHECK(res["rec"] == Json::array({"I1"}));
  CHECK(res["trans"] == Json::array({"I2"}));
  CHECK(res["whole_space_conservative"] == true);
  CHECK(res["intervals"][0]["total_mass"].get<double>() == doctest::Approx(14.0 / 3.0).epsilon(1e-12));

  const auto sparse = invoke({"diffusion", "example5.2:power:-0.5"});
  CHECK(sparse.json()["result"]["diss"] == Json::array({"I", "J"}));
  const auto custom = invoke({"diffusion", "example5.2:custom:k^2"});
  CHECK(custom.json()["result"]["cons"] == Json::array({"J"}));
}

TEST_CASE("heat and trace") {
  Workspace ws;
  const auto heat = invoke({"heat", ws.write("two.json", kTwo), "--u0", ws.write("u0.json", "[1, 1]")});
  REQUIRE(heat.code == cli::kOk);
  for (const Json& row : heat.json()["result"]["trajectory"]) CHECK(row["residual"].get<double>() <= 1e-12);

  const auto trace = invoke({"trace", ws.write("path.json", kPath), "--subset", "0,2"});
  REQUIRE(trace.code == cli::kOk);
  const Json t = trace.json()["result"];
  CHECK(t["invariant"] == false);
  CHECK(t["trace"]["edges"][0][2].get<double>() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("exit codes") {
  Workspace ws;
  CHECK(invoke({}).code == cli::kInputError);
  CHECK(invoke({"classify"}).code == cli::kInputError);
  CHECK(invoke({"classify", ws.path("missing.json")}).code == cli::kInputError);
  const auto parse = invoke({"classify", ws.write("bad.json", "{\"n\": 2,\n \"edges\": [}")});
  CHECK(parse.code == cli::kInputError);
  CHECK(parse.err.find(":2:") != std::string::npos);
  const auto range = invoke({"classify", ws.write("range.json", R"({"n": 3, "edges": [[0, 7, 1]]})")});
  CHECK(range.code == cli::kInputError);
  CHECK(range.err.find("edges[0][1]") != std::string::npos);
  CHECK(invoke({"classify", ws.write("neg.json", R"({"n": 2, "edges": [[0, 1, -1]]})")}).code == cli::kInputError);
  CHECK(invoke({"heat", ws.write("two.json", kTwo), "--u0", ws.write("u0.json", "[1, 2, 3]")}).code ==
        cli::kInputError);
  // a misdeclared limit is a numeric failure, not an input error
  const std::string seq = ws.write("seq.json", std::string(R"({"terms": [)") + kTwo + "," + kTwo + "," + kTwo +
                                                   R"(], "limit": {"form": {"n": 2, "edges": [[0, 1, 5.0]]}}})");
  const auto mosco = invoke({"mosco", seq});
  CHECK(mosco.code == cli::kNumericDiagnostic);
  CHECK(mosco.json()["status"] == "diagnostic");
}

TEST_CASE("table rendering") {
  const Json doc = Json::parse(R"({"command": "demo", "result": {"a": 1.5, "nested": {"b": true}, "rows": [{"name": "x", "passed": false}],
                                   "long": [1,2,3,4,5,6,7,8,9,10,11,12,13,14]}})");
  const std::string table = cli::render_table(doc);
  CHECK(table.find("nested.b") != std::string::npos);
  CHECK(table.find("FAIL") != std::string::npos);
  CHECK(table.find("1.5") != std::string::npos);
  CHECK(table.find("13,") == std::string::npos);
  CHECK(table.find("(14 entries)") != std::string::npos);
}
