#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "graphonforge/graphonforge.hpp"

using namespace graphonforge;

namespace {

// Flags shared by every subcommand; each command reads the ones it needs.
struct Common {
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> samples;
  std::optional<int> resolution;
  std::optional<double> tolerance;
  std::optional<int> zdim;
  std::optional<int> kmax;
  std::optional<std::uint64_t> imax;
  std::string out;
  bool strict = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "random seed (default 0)");
  app->add_option("--samples", c.samples, "Monte Carlo budget");
  app->add_option("--resolution", c.resolution, "grid resolution (pixels, grid points or cells)");
  app->add_option("--tolerance", c.tolerance, "numerical tolerance");
  app->add_option("--zdim", c.zdim, "dimension of z");
  app->add_option("--kmax", c.kmax, "coordinate cells kept in series expansions");
  app->add_option("--imax", c.imax, "monomials kept in series expansions");
  app->add_option("--out", c.out, "output path (default stdout)");
  app->add_flag("--strict", c.strict, "strict validation and admissibility checks");
}

void emit_text(const Common& c, const std::string& text) {
  if (c.out.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
  } else {
    write_text_file(c.out, text);
  }
}

void emit(const Common& c, const Json& j) { emit_text(c, dump_json(j) + "\n"); }

ValidateOptions validation(const Common& c) {
  ValidateOptions v;
  v.strict = c.strict;
  v.seed = c.seed;
  return v;
}

BoundingSequence load_bounding(const std::string& path) { return BoundingSequence::from_json(read_json_file(path)); }

std::shared_ptr<const WpzGraphon> load_wpz(const std::string& path, const Common& c) {
  return wpz_from_json(read_json_file(path), validation(c));
}

Json vector_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

SeriesOptions series_options(const Common& c) {
  SeriesOptions o;
  if (c.kmax) o.k_max = *c.kmax;
  if (c.imax) o.i_max = *c.imax;
  if (c.samples) o.samples = *c.samples;
  o.seed = c.seed;
  o.strict = c.strict;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graphon construction and verification toolkit"};
  app.require_subcommand(1);
  Common c;
  std::optional<int> result;

  // render
  std::string graphon_arg;
  auto* render_cmd = app.add_subcommand("render", "write a PGM image of a graphon");
  add_common(render_cmd, c);
  render_cmd->add_option("--graphon", graphon_arg, "const:p, half, inline JSON or spec file")->required();
  render_cmd->callback([&] {
    const auto w = graphon_from_arg(graphon_arg, validation(c));
    const int r = c.resolution.value_or(256);
    emit_text(c, encode_pgm(render(*w, r), r));
  });

  // density
  std::string graph_arg, method = "auto";
  bool induced = false;
  auto* density_cmd = app.add_subcommand("density", "labeled (or induced) density of a small graph");
  add_common(density_cmd, c);
  std::string constraint_arg;
  auto* graph_opt = density_cmd->add_option("--graph", graph_arg, "K3, P3, C4, edges:0-1,1-2 ...");
  auto* constraint_opt =
      density_cmd->add_option("--constraint", constraint_arg, "rooted constraint checked at sampled root tuples");
  graph_opt->excludes(constraint_opt);
  constraint_opt->excludes(graph_opt);
  density_cmd->add_option("--graphon", graphon_arg, "const:p, half, inline JSON or spec file")->required();
  density_cmd->add_option("--method", method, "exact, mc or auto")->check(CLI::IsMember({"exact", "mc", "auto"}));
  density_cmd->add_flag("--induced", induced, "report the unlabeled induced density");
  density_cmd->callback([&] {
    if (graph_arg.empty() && constraint_arg.empty()) throw ValidationError("one of --graph or --constraint is required");
    const auto w = graphon_from_arg(graphon_arg, validation(c));
    DensityOptions o;
    o.method = method == "exact" ? DensityMethod::Exact : method == "mc" ? DensityMethod::MonteCarlo : DensityMethod::Auto;
    if (c.samples) o.samples = *c.samples;
    o.seed = c.seed;
    if (!constraint_arg.empty()) {
      ConstraintCheckOptions co;
      co.density = o;
      co.seed = c.seed;
      if (c.samples) co.samples = *c.samples;
      if (c.tolerance) co.tolerance = *c.tolerance;
      const auto rep = check_constraint_ae(parse_constraint(constraint_arg), PartitionedGraphon::from(w), co);
      emit(c, Json{{"constraint", constraint_arg}, {"root_samples", rep.samples}, {"violations", rep.violations},
                   {"violation_rate", rep.violation_rate}, {"max_deviation", rep.max_deviation},
                   {"exact", rep.exact}, {"holds", rep.violations == 0}});
      if (rep.violations != 0) result = 3;
      return;
    }
    const auto h = SmallGraph::parse(graph_arg);
    const auto e = induced ? density(h, *w, o) : tau(h, *w, o);
    emit(c, Json{{"graph", graph_arg}, {"kind", induced ? "induced" : "labeled"}, {"method", method},
                 {"value", e.value}, {"sigma", e.sigma}});
  });

  // sample
  std::size_t n_vertices = 0;
  auto* sample_cmd = app.add_subcommand("sample", "draw a W-random graph as an edge list");
  add_common(sample_cmd, c);
  sample_cmd->add_option("--graphon", graphon_arg, "const:p, half, inline JSON or spec file")->required();
  sample_cmd->add_option("--n", n_vertices, "number of vertices")->required();
  sample_cmd->callback([&] {
    const auto w = graphon_from_arg(graphon_arg, validation(c));
    emit_text(c, sample_w_random_graph(*w, n_vertices, c.seed).graph.to_text());
  });

  // wpz
  auto* wpz_cmd = app.add_subcommand("wpz", "the z-indexed graphon family");
  wpz_cmd->require_subcommand(1);
  std::string bounding_path, in_path, other_path;
  std::string d_block_path;
  std::vector<double> z_arg;

  auto* wpz_build = wpz_cmd->add_subcommand("build", "validate a bounding sequence and z, write a graphon spec");
  add_common(wpz_build, c);
  wpz_build->add_option("--bounding", bounding_path, "bounding sequence JSON")->required();
  wpz_build->add_option("--z", z_arg, "comma-separated z (random from --seed when omitted)")->delimiter(',');
  wpz_build->add_option("--d-block", d_block_path, "step graphon spec for the D tiles");
  wpz_build->callback([&] {
    auto p = load_bounding(bounding_path);
    std::vector<double> z = z_arg;
    if (z.empty()) {
      const int n = c.zdim.value_or(p.z_dim());
      RandomStream r(c.seed, 0x7a);
      for (int i = 0; i < n; ++i) z.push_back(r.uniform());
    }
    const auto report = validate(p, validation(c));
    if (!report.valid) {
      std::cerr << dump_json(report.to_json()) << "\n";
      throw ValidationError("bounding sequence is not valid");
    }
    Json spec{{"kind", "wpz"}, {"bounding", p.to_json()}, {"z", vector_json(z)},
              {"d_block", d_block_path.empty() ? Json(nullptr) : Json(d_block_path)}};
    (void)wpz_from_json(spec, validation(c));
    emit(c, spec);
  });

  auto* wpz_decode = wpz_cmd->add_subcommand("decode", "recover z from graphon values");
  add_common(wpz_decode, c);
  wpz_decode->add_option("--in", in_path, "graphon spec")->required();
  wpz_decode->callback([&] {
    const auto w = graphon_from_arg(in_path, validation(c));
    int n = 0;
    if (c.zdim) n = *c.zdim;
    else if (const auto* wp = dynamic_cast<const WpzGraphon*>(w.get())) n = wp->bounding().z_dim();
    else throw ValidationError("--zdim is required for graphons that are not z-indexed");
    DecodeOptions o;
    if (c.tolerance) o.tolerance = *c.tolerance;
    emit(c, Json{{"z", vector_json(decode_z(*w, n, o))}});
  });

  auto* wpz_diff = wpz_cmd->add_subcommand("diff", "tiles where two graphons differ");
  add_common(wpz_diff, c);
  wpz_diff->add_option("--in", in_path, "first graphon spec")->required();
  wpz_diff->add_option("--other", other_path, "second graphon spec")->required();
  wpz_diff->callback([&] {
    const auto a = graphon_from_arg(in_path, validation(c));
    const auto b = graphon_from_arg(other_path, validation(c));
    const auto d = diff_support(*a, *b, c.samples.value_or(100000), c.seed);
    Json tiles = Json::object();
    for (const auto& [k, v] : d.tiles) tiles[k] = v;
    emit(c, Json{{"samples", d.samples}, {"differing", d.differing}, {"tiles", tiles}});
  });

  auto* wpz_degrees = wpz_cmd->add_subcommand("degrees", "degree of every part against the reference table");
  add_common(wpz_degrees, c);
  wpz_degrees->add_option("--in", in_path, "wpz graphon spec")->required();
  wpz_degrees->callback([&] {
    const auto w = load_wpz(in_path, c);
    const auto prof = part_degree_profile(*w, c.samples.value_or(200), c.seed);
    const double tol = c.tolerance.value_or(1e-6);
    Json rows = Json::array();
    bool spread_ok = true;
    for (int p = 0; p < wpz::kParts; ++p) {
      const auto& d = prof[static_cast<std::size_t>(p)];
      spread_ok = spread_ok && d.spread() <= tol;
      Json row{{"part", d.name}, {"degree", d.mean}, {"spread", d.spread()}, {"times_2500", d.mean * 2500}};
      if (p != wpz::Q) {
        row["construction_times_2500"] = construction_degree(p) * 2500;
        row["tabulated_times_2500"] = tabulated_degree(p) * 2500;
        row["matches_table"] = std::abs(construction_degree(p) - tabulated_degree(p)) <= 1e-12;
      } else {
        row["table_lower_bound_times_2500"] = 1300.0;
        row["above_lower_bound"] = d.mean > 1300.0 / 2500;
      }
      rows.push_back(row);
    }
    emit(c, Json{{"parts", rows}, {"constant_on_parts", spread_ok}});
    if (!spread_ok) result = 3;
  });

  // series
  auto* series_cmd = app.add_subcommand("series", "power series of densities in z");
  series_cmd->require_subcommand(1);
  auto* series_expand = series_cmd->add_subcommand("expand", "assemble the truncated series");
  add_common(series_expand, c);
  series_expand->add_option("--graph", graph_arg, "small graph, at most 6 vertices")->required();
  series_expand->add_option("--bounding", bounding_path, "bounding sequence JSON")->required();
  series_expand->callback([&] {
    const auto s = assemble_series(SmallGraph::parse(graph_arg), load_bounding(bounding_path), series_options(c),
                                   default_d_block(), graph_arg);
    emit(c, s.to_json());
  });

  auto* series_eval = series_cmd->add_subcommand("eval", "evaluate a stored series at z");
  add_common(series_eval, c);
  series_eval->add_option("--in", in_path, "series JSON")->required();
  series_eval->add_option("--z", z_arg, "comma-separated z")->delimiter(',')->required();
  series_eval->callback([&] {
    const auto s = TruncatedSeries::from_json(read_json_file(in_path));
    const auto v = eval_series(s, z_arg, c.strict);
    if (!v.admissible) std::cerr << "warning: z is outside the admissible region\n";
    emit(c, Json{{"value", v.value}, {"sigma", v.sigma}, {"dropped_mass", s.dropped_mass}, {"admissible", v.admissible}});
  });

  auto* series_decay = series_cmd->add_subcommand("decay", "fit the geometric decay of coefficient grades");
  add_common(series_decay, c);
  series_decay->add_option("--in", in_path, "series JSON")->required();
  series_decay->callback([&] {
    const auto s = TruncatedSeries::from_json(read_json_file(in_path));
    const auto rep = decay_check(s);
    emit(c, rep.to_json());
    if (!rep.passed) result = 3;
  });

  // stab
  auto* stab_cmd = app.add_subcommand("stab", "stabilizing systems");
  stab_cmd->require_subcommand(1);
  auto sample_spec = [&] {
    stab::SampleSpec s;
    s.points = c.samples.value_or(200);
    s.seed = c.seed;
    if (c.tolerance) s.tolerance = *c.tolerance;
    return s;
  };

  auto* stab_check = stab_cmd->add_subcommand("check", "check the nonsingular-minor and invariance properties on sampled points");
  add_common(stab_check, c);
  stab_check->add_option("--in", in_path, "system JSON with targets")->required();
  stab_check->callback([&] {
    const auto f = stab::load_system(read_json_file(in_path));
    const auto rep = stab::check_P1_P2(f.system, f.targets, sample_spec());
    Json j = rep.to_json();
    j["strength"] = vector_json(stab::strength_profile(f.system, 200, c.seed));
    emit(c, j);
    if (!rep.passed) result = 3;
  });

  std::string family = "all";
  auto* stab_continue = stab_cmd->add_subcommand("continue", "trace a perturbed synthetic family and check the bound");
  add_common(stab_continue, c);
  stab_continue->add_option("--family", family, "parabola, cubic, planar or all")
      ->check(CLI::IsMember({"parabola", "cubic", "planar", "all"}));
  stab_continue->callback([&] {
    stab::ContinuationOptions o;
    o.points = c.resolution.value_or(1001);
    Json reports = Json::array();
    bool ok = true;
    for (const auto& fam : stab::synthetic_families()) {
      if (family != "all" && fam.name != family) continue;
      const auto rep = stab::gronwall_check(fam, c.samples.value_or(2000), c.seed, o);
      ok = ok && rep.holds && rep.trace.max_residual <= c.tolerance.value_or(1e-8);
      reports.push_back(rep.to_json());
    }
    emit(c, Json{{"families", reports}, {"passed", ok}});
    if (!ok) result = 3;
  });

  int level = 1;
  double eps = 0.1, c_prime = 0.5;
  auto* stab_excellent = stab_cmd->add_subcommand("excellent", "one make-excellent step at a level");
  add_common(stab_excellent, c);
  stab_excellent->add_option("--in", in_path, "system JSON with targets")->required();
  stab_excellent->add_option("--m", level, "level to make excellent");
  stab_excellent->add_option("--eps", eps, "half-width of the new interval");
  stab_excellent->add_option("--cprime", c_prime, "strength kept after shrinking");
  stab_excellent->callback([&] {
    const auto f = stab::load_system(read_json_file(in_path));
    stab::ExcellentOptions o;
    o.samples = c.samples.value_or(200);
    o.seed = c.seed;
    const auto r = stab::make_excellent_step(f.system, f.targets, level, eps, c_prime, o);
    Json j = r.to_json();
    j["system"] = stab::system_file_json(r.system, f.targets);
    emit(c, j);
    if (!r.certified) result = 3;
  });

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "self-checks");
  verify_cmd->require_subcommand(1);
  auto* verify_all = verify_cmd->add_subcommand("all", "run every check and print a summary");
  add_common(verify_all, c);
  verify_all->callback([&] {
    verify::VerifyOptions o;
    o.seed = c.seed;
    if (c.samples) o.samples = *c.samples;
    const auto rep = verify::run_all(o, [](const verify::CheckResult& r) {
      std::cerr << r.id << ": " << (r.passed ? "pass" : "FAIL") << "\n";
    });
    emit(c, rep.to_json());
    if (!rep.passed()) result = 3;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 2;
  } catch (const BudgetError& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return 3;
  } catch (const ToleranceError& e) {
    std::cerr << "tolerance failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return result.value_or(0);
}
