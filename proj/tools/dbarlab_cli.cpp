// Command-line front end; flags override values loaded from --config.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dbarlab/cli.hpp"

namespace cli = dbarlab::cli;

int main(int argc, char** argv) {
  CLI::App app{"weighted dbar-Neumann numerical lab"};
  app.require_subcommand(1);

  std::string config_path, weight, expr, radii, out;
  std::size_t n = 0, q = 0, m = 0, threads = 0;
  double radius = 0.0, tol = 0.0;
  std::uint64_t seed = 0;

  std::vector<CLI::App*> subs;
  for (char const* name : {"analyze", "verify", "spectrum", "solve", "list-weights"}) subs.push_back(app.add_subcommand(name)->fallthrough());
  subs[0]->description("sample s_q along rays and classify the existence/compactness criteria");
  subs[1]->description("check the Kohn-Morrey identity on seeded bump forms");
  subs[2]->description("low-lying spectrum of the discrete box across radii");
  subs[3]->description("solve box u = f for a seeded bump f");
  subs[4]->description("list built-in weights");

  auto* o_config = app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  auto* o_weight = app.add_option("--weight", weight, "built-in weight name");
  auto* o_expr = app.add_option("--expr", expr, "weight expression");
  o_weight->excludes(o_expr);
  auto* o_n = app.add_option("--n", n, "complex dimension");
  auto* o_q = app.add_option("--q", q, "form degree");
  auto* o_radius = app.add_option("--radius", radius, "half-width R of the grid box");
  auto* o_m = app.add_option("--m", m, "points per real axis");
  auto* o_radii = app.add_option("--radii", radii, "comma-separated radii");
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  auto* o_tol = app.add_option("--tol", tol, "tolerance");
  auto* o_out = app.add_option("--out", out, "output path ('-' for stdout)");
  auto* o_threads = app.add_option("--threads", threads, "worker cap");
  bool list = false;
  app.add_flag("--list-weights", list, "list built-in weights and exit");

  // allow `dbarlab --list-weights` without a subcommand
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--list-weights") return cli::cmd_list_weights(std::cout);

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const& e) {
    int const code = app.exit(e);
    return code == 0 ? cli::exit_ok : cli::exit_usage;
  }

  cli::RunConfig c;
  for (auto* s : subs)
    if (s->parsed()) c.command = s->get_name();
  try {
    if (o_config->count()) cli::load_ini_file(c, config_path);
    if (o_weight->count()) c.weight = weight, c.expr.clear();
    if (o_expr->count()) c.expr = expr;
    if (o_n->count()) c.n = n;
    if (o_q->count()) c.q = q;
    if (o_radius->count()) c.radius = radius;
    if (o_m->count()) c.m = m;
    if (o_radii->count()) c.radii = cli::parse_list("--radii", radii);
    if (o_seed->count()) c.seed = seed;
    if (o_tol->count()) c.tol = tol;
    if (o_out->count()) c.out = out;
    if (o_threads->count()) c.threads = threads;
  } catch (cli::ConfigError const& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return cli::exit_usage;
  }
  return cli::run(c, std::cout, std::cerr);
}
