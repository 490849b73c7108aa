#include "apportion/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using apportion::run_cli;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("apportion_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    write("dict.csv", "feature_id,x1,x2,x3\nf1,1,0,0\nf2,0,1,0\nf3,0,1,1\nf4,0,0,0\n");
    write("labels.csv", "profile_id,source\nx1,s1\nx2,s1\nx3,s2\n");
    write("e1.csv", "feature_id,value\nf1,1\nf2,0\nf3,0\nf4,0\n");
    write("e1e4.csv", "feature_id,value\nf1,1\nf2,0\nf3,0\nf4,1\n");
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("estimate on the fixture") {
  Workspace w;
  const Run r = run({"estimate", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample",
                     w.p("e1.csv"), "--method", "rts"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["method"] == "RTS");
  CHECK(j["theta"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(j["theta"][1].get<double>()) <= 1e-10);
  CHECK(j["provenance"]["inputs"]["dictionary"]["sha256"].get<std::string>().size() == 64);
  CHECK(j["provenance"].contains("timestamp"));

  const Run atr = run({"estimate", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample",
                       w.p("e1.csv"), "--method", "atr"});
  REQUIRE(atr.code == 0);
  CHECK(nlohmann::json::parse(atr.out)["theta"][1].get<double>() == doctest::Approx(-0.5));

  const Run se = run({"estimate", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample",
                      w.p("e1e4.csv"), "--method", "rts", "--se"});
  REQUIRE(se.code == 0);
  const auto js = nlohmann::json::parse(se.out);
  CHECK(js["sse"][0][0].get<double>() == doctest::Approx(2.0));
  CHECK(js["sse"][0][1].get<double>() == doctest::Approx(-1.0));
  CHECK(js["standard_errors"][1].get<double>() == doctest::Approx(std::sqrt(2.0)));

  const Run gls = run({"estimate", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample",
                       w.p("e1.csv"), "--method", "gls", "--gamma", "1e10"});
  REQUIRE(gls.code == 0);
  CHECK(nlohmann::json::parse(gls.out)["theta"][1].get<double>() == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("flag contract violations exit with 2") {
  Workspace w;
  const std::vector<std::string> base{"--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample",
                                      w.p("e1.csv")};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a{"estimate"};
    a.insert(a.end(), base.begin(), base.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };
  const Run no_gamma = with({"--method", "gls"});
  CHECK(no_gamma.code == 2);
  CHECK(no_gamma.err.find("Usage") != std::string::npos);
  CHECK(with({"--method", "rts", "--gamma", "1"}).code == 2);
  CHECK(with({"--method", "atr", "--se"}).code == 2);
  CHECK(with({"--method", "gls", "--gamma", "-1"}).code == 2);
  CHECK(with({"--method", "ols"}).code == 2);
  CHECK(with({"--method", "rts", "--frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("input and numerical failures map to exit codes") {
  Workspace w;
  const Run missing = run({"estimate", "--dict", w.p("dict.csv"), "--labels",
                           w.write("l2.csv", "profile_id,source\nx1,s1\nx2,s1\n"), "--sample", w.p("e1.csv"),
                           "--method", "rts"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("x3") != std::string::npos);

  const Run singular = run({"threshold", "--dict",
                            w.write("sing.csv", "feature_id,x1,x2,x3\nf1,1,0,1\nf2,0,1,1\nf3,0,0,0\nf4,0,0,0\n"),
                            "--labels", w.p("labels.csv")});
  CHECK(singular.code == 3);
  CHECK(singular.err.find("numerical") != std::string::npos);

  const Run partial = run({"estimate", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample",
                           w.write("part.csv", "feature_id,value\nf1,1\nf2,0\n"), "--method", "rts"});
  CHECK(partial.code == 2);
}

TEST_CASE("threshold on the fixture") {
  Workspace w;
  const Run r = run({"threshold", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--gamma", "1"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["gamma_threshold"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(j["variance_profiles"]["v_atr"][1][1].get<double>() == doctest::Approx(2.0));
}

TEST_CASE("predict writes the completed profile") {
  Workspace w;
  const std::string mask = w.write("mask.txt", "feature_id\nf4\n");
  const std::string done = w.p("completed.csv");
  const Run r = run({"predict", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample",
                     w.p("e1e4.csv"), "--method", "rts", "--mask-features", mask, "--completed", done});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j["predictions"].size() == 1);
  CHECK(j["predictions"][0]["feature_id"] == "f4");
  CHECK(j["predictions"][0]["held_out"].get<double>() == 1.0);
  CHECK(j["diagnostics"]["held_out_rmse"].get<double>() == doctest::Approx(1.0));
  CHECK(slurp(done) == "feature_id,value\nf1,1\nf2,0\nf3,0\nf4,0\n");

  CHECK(run({"predict", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"), "--sample", w.p("e1.csv"),
             "--method", "rts", "--mask-features", mask, "--mask-excitation", "240"})
            .code == 2);
}

TEST_CASE("reports are byte-identical without timestamps") {
  Workspace w;
  const std::vector<std::string> a{"estimate", "--dict", w.p("dict.csv"), "--labels", w.p("labels.csv"),
                                   "--sample", w.p("e1e4.csv"), "--method", "rts", "--se", "--no-timestamp"};
  const Run r1 = run(a), r2 = run(a);
  REQUIRE(r1.code == 0);
  CHECK(r1.out == r2.out);
  CHECK(r1.out.find("timestamp") == std::string::npos);
}

TEST_CASE("simulate writes a deterministic report") {
  Workspace w;
  const std::string cfg = w.write("sim.cfg",
                                  "mode = estimation\n"
                                  "p = 48\n"
                                  "excitations = 8\n"
                                  "K = 3\n"
                                  "n_per_category = 5\n"
                                  "factors = 8\n"
                                  "alphas = 0.6, 1\n"
                                  "theta_count = 3\n"
                                  "replicates = 10\n"
                                  "seed = 4\n");
  const Run one = run({"simulate", "--config", cfg, "--out", w.p("o1"), "--threads", "1", "--no-timestamp"});
  REQUIRE(one.code == 0);
  const Run many = run({"simulate", "--config", cfg, "--out", w.p("o8"), "--threads", "8", "--no-timestamp"});
  REQUIRE(many.code == 0);
  const std::string report = slurp(w.dir / "o1" / "report.csv");
  CHECK(report == slurp(w.dir / "o8" / "report.csv"));
  CHECK(report.rfind("alpha,theta_id,method,category,metric,value,mc_se,replicates,seed\n", 0) == 0);
  CHECK(slurp(w.dir / "o1" / "summary.json") == slurp(w.dir / "o8" / "summary.json"));
  const auto s = nlohmann::json::parse(slurp(w.dir / "o1" / "summary.json"));
  CHECK(s["summary"].size() == 2);
  CHECK(s["provenance"]["seed"] == 4);

  const std::string pred = w.write("pred.cfg",
                                   "mode = prediction\np = 48\nexcitations = 8\nK = 3\nn_per_category = 5\n"
                                   "factors = 8\nalphas = 1\ntheta_count = 2\nreplicates = 5\n"
                                   "mask_excitation = 270, 275\n");
  CHECK(run({"simulate", "--config", pred, "--out", w.p("op")}).code == 0);
  CHECK(run({"simulate", "--config", w.write("bad.cfg", "nope = 1\n"), "--out", w.p("ob")}).code == 2);
}
