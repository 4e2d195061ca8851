#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "graphonforge/graphonforge.hpp"

using namespace graphonforge;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded and returns its exit code and stdout.
Run cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + GRAPHONFORGE_CLI + std::string(" ") + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string sample(const std::string& name) { return std::string(GRAPHONFORGE_SAMPLES) + "/" + name; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "graphonforge_cli_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(GraphonArgument, AcceptedForms) {
  auto c = graphon_from_arg("const:0.25");
  EXPECT_DOUBLE_EQ((*c)(0.1, 0.9), 0.25);
  auto h = graphon_from_arg("half");
  EXPECT_DOUBLE_EQ((*h)(0.2, 0.7), 0.0);
  EXPECT_DOUBLE_EQ((*h)(0.7, 0.9), 1.0);
  auto j = graphon_from_arg(R"({"kind":"step","sizes":[0.5,0.5],"values":[[1,0],[0,1]]})");
  EXPECT_DOUBLE_EQ((*j)(0.1, 0.2), 1.0);
  EXPECT_DOUBLE_EQ((*j)(0.1, 0.8), 0.0);
  auto f = graphon_from_arg(sample("two_part.json"));
  EXPECT_NEAR((*f)(0.9, 0.9), 1.0, 1e-15);
}

TEST(GraphonArgument, RejectsMalformedInput) {
  EXPECT_THROW(graphon_from_arg("const:abc"), ValidationError);
  EXPECT_THROW(graphon_from_arg("const:1.5"), ValidationError);
  EXPECT_THROW(graphon_from_arg("{\"kind\":\"step\""), ValidationError);
  EXPECT_THROW(graphon_from_arg(R"({"kind":"mystery"})"), ValidationError);
  EXPECT_THROW(graphon_from_arg("/nonexistent/graphon.json"), ValidationError);
}

TEST(Formats, NumbersUseSeventeenSignificantDigits) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(1.0 / 3), "0.33333333333333331");
  EXPECT_EQ(format_number(2.0), "2");
  EXPECT_EQ(std::stod(format_number(2.0 / 3)), 2.0 / 3);
  EXPECT_NE(dump_json(Json{{"x", 0.1}}).find("0.10000000000000001"), std::string::npos);
}

TEST(Formats, EdgeListRoundTrip) {
  EdgeListGraph g;
  g.n = 4;
  g.edges = {{0, 1}, {1, 3}, {2, 3}};
  const auto text = g.to_text();
  EXPECT_EQ(text, "4 3\n0 1\n1 3\n2 3\n");
  const auto back = EdgeListGraph::from_text(text);
  EXPECT_EQ(back.n, 4u);
  EXPECT_EQ(back.edges, g.edges);
  EXPECT_THROW(EdgeListGraph::from_text("3 1\n0 3\n"), ValidationError);
  EXPECT_THROW(EdgeListGraph::from_text("3 2\n0 1\n"), ValidationError);
}

TEST(Formats, PgmHeaderAndPixels) {
  const auto px = render(HalfGraphon{}, 4);
  const auto pgm = encode_pgm(px, 4);
  const std::string header = "P5\n4 4\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 16);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  // A value of 1 is black: the corner near the origin is white, the far corner black.
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size()]), 255);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 15]), 0);
}

TEST(Cli, DensityOfTriangleInConstantGraphon) {
  const auto r = cli("density --graph K3 --graphon const:0.5 --method exact");
  EXPECT_EQ(r.code, 0);
  const auto j = Json::parse(r.out);
  EXPECT_DOUBLE_EQ(j.at("value").get<double>(), 0.125);
}

TEST(Cli, ConstraintLanguage) {
  const std::string tri = "graph(roots=[A]; verts=[x:A,y:A]; edge(r1,x); edge(r1,y); edge(x,y))";
  const std::string base = "density --samples 50 --graphon " + sample("two_part.json") + " --constraint ";
  const auto ok = cli(base + "'27 * " + tri + " == 8'");
  EXPECT_EQ(ok.code, 0);
  EXPECT_TRUE(Json::parse(ok.out).at("holds").get<bool>());
  EXPECT_EQ(cli(base + "'" + tri + " == 0.3'").code, 3);
  EXPECT_EQ(cli(base + "'" + tri + " = 0.3'").code, 2);
  EXPECT_EQ(cli("density --graph K3 --constraint '1 == 1' --graphon half").code, 2);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("density --graph K3 --graphon const:2").code, 2);
  EXPECT_EQ(cli("density --graph nonsense --graphon half").code, 2);
  EXPECT_EQ(cli("density --graph K3 --graphon half --method exact").code, 2);
  EXPECT_EQ(cli("render --graphon /nonexistent.json").code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
  EXPECT_EQ(cli("density --graph K3 --graphon half --method mc --samples 0").code, 3);
}

TEST(Cli, RenderWritesExactBytes) {
  const auto out = scratch("half.pgm");
  ASSERT_EQ(cli("render --graphon half --resolution 8 --out " + out.string()).code, 0);
  EXPECT_EQ(slurp(out), encode_pgm(render(HalfGraphon{}, 8), 8));
}

TEST(Cli, SampleIsThreadInvariantEdgeList) {
  const auto a = cli("sample --graphon half --n 200 --seed 7", "GRAPHONFORGE_THREADS=1");
  const auto b = cli("sample --graphon half --n 200 --seed 7", "GRAPHONFORGE_THREADS=3");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto g = EdgeListGraph::from_text(a.out);
  EXPECT_EQ(g.n, 200u);
  for (const auto& [u, v] : g.edges) EXPECT_LT(u, v);
}

TEST(Cli, WpzBuildDecodeRoundTrip) {
  const auto spec = scratch("wpz.json");
  ASSERT_EQ(cli("wpz build --bounding " + sample("bounding.json") +
                " --z 0.1,0.2,0.3,0.4,0.5,0.6 --out " + spec.string()).code,
            0);
  const auto r = cli("wpz decode --in " + spec.string());
  ASSERT_EQ(r.code, 0);
  const auto z = Json::parse(r.out).at("z");
  ASSERT_EQ(z.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(z[i].get<double>(), 0.1 * static_cast<double>(i + 1), 1e-12);
}

TEST(Cli, StabilizationCommands) {
  EXPECT_EQ(cli("stab check --in " + sample("system_square.json")).code, 0);
  const auto r = cli("stab excellent --in " + sample("system_linear.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(Json::parse(r.out).at("certified").get<bool>());
}
