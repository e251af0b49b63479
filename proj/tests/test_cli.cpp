#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "tdf/cli.hpp"

using namespace tdf;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tdforecast");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("tdf_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  // Three projects with weekly snapshots over roughly six months.
  std::string snapshot_csv() const {
    std::ostringstream s;
    s << "PROJECT,ANALYSIS_DATE,SQALE_INDEX,S1,S2\n";
    for (const char* p : {"alpha", "beta", "gamma"}) {
      TimePoint t = *parse_iso8601("2020-01-03");
      for (int w = 0; w < 26; ++w) {
        s << p << ',' << format_iso8601(t) << ',' << 100 + 3 * w << ',' << w % 5 << ',' << 10 + w << '\n';
        t += std::chrono::days(7);
      }
    }
    return s.str();
  }

  std::string panel_dir(const std::string& name, std::size_t n, int informative = 2, int noise = 2,
                        int projects = 3) const {
    const fs::path d = dir_ / name;
    fs::create_directories(d);
    for (int i = 0; i < projects; ++i) {
      sim::PanelSpec spec{.n = n, .informative = informative, .noise = noise, .freq = Frequency::Monthly};
      const auto p = sim::armax_panel(100 + static_cast<std::uint64_t>(i), spec, "proj" + std::to_string(i));
      std::ofstream f(d / (p.project_id + ".csv"));
      write_panel_csv(f, p);
    }
    return d.string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SerializeWritesOnePanelPerProject) {
  write("snap.csv", snapshot_csv());
  const auto r = run({"serialize", path("snap.csv"), "--freq", "monthly", "--out", path("monthly")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* p : {"alpha", "beta", "gamma"}) EXPECT_TRUE(fs::exists(dir_ / "monthly" / (std::string(p) + ".csv")));
  EXPECT_TRUE(fs::exists(dir_ / "monthly" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir_ / "monthly" / "summary.json"));

  const auto b = run({"serialize", path("snap.csv"), "--freq", "biweekly", "--out", path("biweekly")});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto pm = read_panel_file(dir_ / "monthly" / "alpha.csv");
  const auto pb = read_panel_file(dir_ / "biweekly" / "alpha.csv");
  EXPECT_NE(pm.size(), pb.size());
  EXPECT_GT(pb.size(), pm.size());
  EXPECT_EQ(pm.frequency, Frequency::Monthly);
  EXPECT_EQ(pb.frequency, Frequency::Biweekly);

  const auto manifest = nlohmann::json::parse(slurp(dir_ / "monthly" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "serialize");
  EXPECT_EQ(manifest["input_digests"].size(), 1u);
  EXPECT_EQ(manifest["input_digests"].begin()->get<std::string>().size(), 64u);
}

TEST_F(CliTest, SerializeBadDateReportsRow) {
  write("bad.csv", "PROJECT,ANALYSIS_DATE,SQALE_INDEX\na,2020-01-01,5\na,2020-13-45,6\n");
  const auto r = run({"serialize", path("bad.csv"), "--out", path("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("row 3"), std::string::npos) << r.err;

  write("noproj.csv", "ANALYSIS_DATE,SQALE_INDEX\n2020-01-01,5\n");
  EXPECT_EQ(run({"serialize", path("noproj.csv"), "--out", path("o")}).code, 2);
  EXPECT_EQ(run({"serialize", path("missing.csv"), "--out", path("o")}).code, 2);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"evaluate", path("x"), "--out", path("o"), "--criterion", "hqic"}).code, 2);
  EXPECT_EQ(run({"--version"}).code, 0);
}

TEST_F(CliTest, SelectKeepsColumnsAndFailsWhenEmpty) {
  const auto panels = panel_dir("panels", 100, 5, 10);
  const auto r = run({"select", panels, "--out", path("sel.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("sel.json")));
  EXPECT_FALSE(j["kept"].empty());
  EXPECT_EQ(j["projects"], 3);

  // Constant columns all fail the variance filter.
  fs::create_directories(dir_ / "flat");
  for (int i = 0; i < 2; ++i) {
    auto p = sim::armax_panel(200 + static_cast<std::uint64_t>(i), sim::PanelSpec{.n = 40, .informative = 1, .noise = 1});
    p.project_id = "flat" + std::to_string(i);
    p.exog.setConstant(3.0);
    std::ofstream f(dir_ / "flat" / (p.project_id + ".csv"));
    write_panel_csv(f, p);
  }
  const auto e = run({"select", path("flat")});
  EXPECT_EQ(e.code, 3) << e.err;
}

TEST_F(CliTest, EvaluateEmitsOneAggregateRowPerModel) {
  const auto panels = panel_dir("panels", 60);
  const auto r = run({"evaluate", panels, "--models", "arimax,rf", "--fast", "--out", path("ev")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto agg = slurp(dir_ / "ev" / "aggregate.csv");
  std::istringstream lines(agg);
  std::string header, a, b, extra;
  std::getline(lines, header);
  std::getline(lines, a);
  std::getline(lines, b);
  EXPECT_EQ(header, "APPROACH,MAPE,MAE,RMSE");
  EXPECT_EQ(a.rfind("arimax,", 0), 0u);
  EXPECT_EQ(b.rfind("rf,", 0), 0u);
  EXPECT_FALSE(std::getline(lines, extra));

  const auto rep = nlohmann::json::parse(slurp(dir_ / "ev" / "report.json"));
  ASSERT_EQ(rep.size(), 6u);
  // Aggregate row equals the mean of the project rows.
  double s = 0;
  int n = 0;
  for (const auto& row : rep)
    if (row["forecaster"] == "rf" && row["converged"].get<bool>()) {
      s += row["mape"].get<double>();
      ++n;
    }
  std::vector<std::string> cells;
  std::stringstream bs(b);
  for (std::string c; std::getline(bs, c, ',');) cells.push_back(c);
  if (n == 3) {
    EXPECT_NEAR(std::stod(cells[1]), s / n, 1e-9);
  }
  EXPECT_TRUE(fs::exists(dir_ / "ev" / "manifest.json"));
}

TEST_F(CliTest, EvaluateIsByteIdenticalAcrossRunsAndThreads) {
  const auto panels = panel_dir("panels", 60);
  const std::vector<std::string> base{"evaluate", panels, "--models", "arimax,svr_rbf,naive", "--fast", "--seed", "7"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  ASSERT_EQ(run(with({"--out", path("a")})).code, 0);
  ASSERT_EQ(run(with({"--out", path("b")})).code, 0);
  ASSERT_EQ(run(with({"--out", path("c"), "--threads", "8"})).code, 0);
  for (const char* f : {"report.json", "aggregate.csv"}) {
    const auto ref = slurp(dir_ / "a" / f);
    EXPECT_FALSE(ref.empty());
    EXPECT_EQ(ref, slurp(dir_ / "b" / f)) << f;
    EXPECT_EQ(ref, slurp(dir_ / "c" / f)) << f;
  }
}

TEST_F(CliTest, HorizonWritesRequestedRows) {
  const auto panels = panel_dir("panels", 120);
  const auto r = run({"horizon", panels, "--model", "arimax", "--fast", "--max-h", "36", "--out", path("hz")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir_ / "hz" / "horizon.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "PERIOD,MEAN,MEDIAN,MAX,MIN,VARIANCE");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 37);
  EXPECT_EQ(slurp(dir_ / "hz" / "boxplot.csv").rfind("PERIOD,PROJECT,MAPE\n", 0), 0u);
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "hz" / "manifest.json"));
  EXPECT_EQ(manifest["config"]["run"]["policy"], "held_out");
  EXPECT_EQ(manifest["config"]["run"]["max_h"], 36);
}

TEST_F(CliTest, ForecastFromPanelAndModelFile) {
  const auto panels = panel_dir("panels", 60, 1, 1, 1);
  const auto panel_file = (fs::path(panels) / "proj0.csv").string();
  const auto r = run({"forecast", panel_file, "--model", "arimax", "--h", "6", "--save-model", path("model.json"),
                      "--out", path("fc/forecast.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(path("fc/forecast.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "STEP,PERIOD_START,FORECAST,LOWER,UPPER");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_TRUE(fs::exists(dir_ / "fc" / "manifest.json"));

  // The one-step value matches the library's next-period forecast.
  const auto p = read_panel_file(panel_file);
  const auto f = fit_forecaster(parse_forecaster_spec("arimax"), p);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::vector<std::string> cells;
  std::stringstream ls(line);
  for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
  EXPECT_EQ(cells[2], format_double(f->predict_next(nullptr)));

  // A saved (0,1,0) model yields a flat line centred in its bands.
  FittedSarimax rw;
  rw.order = SarimaxOrder{0, 1, 0};
  rw.sigma2 = 4.0;
  rw.y_tail = {5.0};
  rw.n_obs = 3;
  write("rw.json", to_json(rw).dump());
  const auto g = run({"forecast", "--model-file", path("rw.json"), "--h", "4"});
  ASSERT_EQ(g.code, 0) << g.err;
  std::istringstream gin(g.out);
  std::getline(gin, line);
  while (std::getline(gin, line)) {
    std::vector<std::string> c;
    std::stringstream s(line);
    for (std::string x; std::getline(s, x, ',');) c.push_back(x);
    ASSERT_EQ(c.size(), 5u) << line;
    EXPECT_EQ(std::stod(c[2]), 5.0);
    EXPECT_NEAR(std::stod(c[3]) + std::stod(c[4]), 10.0, 1e-9);
  }
}

TEST_F(CliTest, ForecastMissingModelFileIsInputError) {
  const auto r = run({"forecast", "--model-file", path("nope.json"), "--h", "3"});
  EXPECT_EQ(r.code, 2);
  write("garbage.json", "{not json");
  EXPECT_EQ(run({"forecast", "--model-file", path("garbage.json")}).code, 2);
}
