#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "dbarlab/cli.hpp"

using namespace dbarlab;
namespace cli = dbarlab::cli;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run_binary(std::string const& args) {
  std::string const cmd = std::string(DBARLAB_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), p)) > 0) o.out.append(buf.data(), got);
  int const status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string body(std::string const& csv) {
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line))
    if (line.empty() || line[0] != '#') out += line + '\n';
  return out;
}

Outcome run_in_process(cli::RunConfig c) {
  std::ostringstream os, err;
  Outcome o;
  o.code = cli::run(std::move(c), os, err);
  o.out = os.str();
  return o;
}

} // namespace

TEST(Ini, ParsesSectionsAndComments) {
  cli::RunConfig c;
  std::istringstream is("# comment\n[weight]\nname = example_a\nn = 2\n\n[grid]\nradius = 3.5\nm = 16\nradii = 1, 2, 4\n"
                        "; other\n[run]\nq = 2\nseed = 9\ntol = 1e-3\n");
  cli::load_ini(c, is);
  EXPECT_EQ(c.weight, "example_a");
  EXPECT_EQ(c.n, 2u);
  EXPECT_DOUBLE_EQ(c.radius, 3.5);
  EXPECT_EQ(c.m, 16u);
  EXPECT_EQ(c.radii, (std::vector<double>{1.0, 2.0, 4.0}));
  EXPECT_EQ(c.q, 2u);
  EXPECT_EQ(c.seed, 9u);
  ASSERT_TRUE(c.tol.has_value());
  EXPECT_DOUBLE_EQ(*c.tol, 1e-3);
}

TEST(Ini, RejectsUnknownKeysAndSections) {
  auto fails = [](char const* text) {
    cli::RunConfig c;
    std::istringstream is(text);
    EXPECT_THROW(cli::load_ini(c, is), cli::ConfigError) << text;
  };
  fails("[grid]\nwidth = 3\n");
  fails("[output]\npath = x\n");
  fails("radius = 3\n");
  fails("[grid\n");
  fails("[grid]\nm\n");
  fails("[grid]\nm = twelve\n");
  fails("[grid]\nradius = 1e999\n");
}

TEST(Validate, DefaultsAndErrors) {
  cli::RunConfig c;
  c.command = "spectrum";
  cli::validate(c);
  EXPECT_DOUBLE_EQ(*c.tol, 1e-6);
  EXPECT_EQ(c.radii, (std::vector<double>{3.0, 4.0, 5.0}));

  auto bad = [](auto mutate) {
    cli::RunConfig c;
    c.command = "verify";
    mutate(c);
    EXPECT_THROW(cli::validate(c), cli::ConfigError);
  };
  bad([](cli::RunConfig& c) { c.command = "plot"; });
  bad([](cli::RunConfig& c) { c.q = 2; });
  bad([](cli::RunConfig& c) { c.m = 4; });
  bad([](cli::RunConfig& c) { c.weight = "example_a"; });
  bad([](cli::RunConfig& c) { c.weight = "nope"; });
  bad([](cli::RunConfig& c) { c.k = 33; });
  bad([](cli::RunConfig& c) { c.command = "spectrum", c.radii = {3.0, 2.0, 4.0}; });
}

TEST(Run, ExitCodes) {
  cli::RunConfig ok;
  ok.command = "verify";
  ok.expr = "0";
  ok.radius = 2.0;
  ok.m = 24;
  ok.trials = 2;
  auto const a = run_in_process(ok);
  EXPECT_EQ(a.code, cli::exit_ok);
  EXPECT_NE(a.out.find("# status: pass"), std::string::npos);

  cli::RunConfig strict = ok;
  strict.tol = 1e-12;
  strict.weight = "gaussian";
  strict.expr.clear();
  EXPECT_EQ(run_in_process(strict).code, cli::exit_check_failed);

  cli::RunConfig bad = ok;
  bad.expr = "modsq(z1";
  EXPECT_EQ(run_in_process(bad).code, cli::exit_usage);
}

TEST(Run, ConfigHeaderIncludesDefaults) {
  cli::RunConfig c;
  c.command = "analyze";
  c.weight = "example_a";
  c.n = 2;
  c.q = 2;
  c.directions = 16;
  auto const o = run_in_process(c);
  ASSERT_EQ(o.code, cli::exit_ok);
  for (char const* key : {"# command = analyze", "# [weight] name = example_a", "# [grid] m = 32", "# [run] seed = 1",
                          "# [run] tol = ", "# [run] threads = 1", "# [grid] radii = 1,2,4,8,16"})
    EXPECT_NE(o.out.find(key), std::string::npos) << key;
  EXPECT_NE(o.out.find("LIKELY_COMPACT"), std::string::npos);
}

TEST(Binary, ListWeights) {
  auto const o = run_binary("list-weights");
  EXPECT_EQ(o.code, 0);
  for (char const* name : {"example_a", "decoupled_quartic", "gaussian"}) EXPECT_NE(o.out.find(name), std::string::npos);
  EXPECT_EQ(run_binary("--list-weights").out, o.out);
}

TEST(Binary, UsageErrorsExitOne) {
  EXPECT_EQ(run_binary("").code, 1);
  EXPECT_EQ(run_binary("verify --weight nope").code, 1);
  EXPECT_EQ(run_binary("verify --config /nonexistent/file.ini").code, 1);
  EXPECT_EQ(run_binary("frobnicate").code, 1);
}

TEST(Binary, VerifyFlatWeightPasses) {
  auto const o = run_binary("verify --expr 0 --radius 2 --m 24");
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("seed,lhs,rhs_grad,rhs_curv,rel_err"), std::string::npos);
}

TEST(Binary, DeterministicBodies) {
  for (char const* args : {"analyze --weight example_a --n 2 --q 2 --seed 5",
                           "verify --weight decoupled_quartic --n 1 --radius 2 --m 24 --seed 5",
                           "spectrum --weight gaussian --n 1 --radii 2,3,4 --seed 5"}) {
    auto const a = run_binary(args), b = run_binary(args);
    EXPECT_EQ(a.code, b.code) << args;
    EXPECT_FALSE(body(a.out).empty()) << args;
    EXPECT_EQ(body(a.out), body(b.out)) << args;
  }
}

TEST(Binary, FlagsOverrideConfigFile) {
  std::string const path = testing::TempDir() + "dbarlab_cli_test.ini";
  {
    std::ofstream f(path);
    f << "[weight]\nname = gaussian\nn = 1\n[grid]\nradius = 2\nm = 16\n[run]\nseed = 3\n";
  }
  auto const o = run_binary("verify --config " + path + " --seed 4");
  EXPECT_NE(o.out.find("# [run] seed = 4"), std::string::npos);
  EXPECT_NE(o.out.find("# [grid] m = 16"), std::string::npos);
  std::remove(path.c_str());
}
