#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "forge/blend.hpp"
#include "forge/cli.hpp"
#include "forge/compositor.hpp"
#include "forge/metrics.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace forge;
namespace fs = std::filesystem;
namespace t = forge::testing;
using t::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result forge_run(std::vector<std::string> args) {
  args.insert(args.begin(), "forge");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Fixture {
  TempDir dir;
  ImageTensor s, tgt;
  BinaryMask k;
  Fixture() {
    t::Rng rng(42);
    s = t::random_lattice_image(rng, 12, 12, 3);
    tgt = t::random_lattice_image(rng, 12, 12, 3);
    k = t::rect_mask(12, 12, 3, 3, 6, 5);
    save_image(s, dir / "s.png");
    save_image(tgt, dir / "t.png");
    save_mask(k, dir / "k.png");
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("every subcommand prints help and exits 0") {
  for (const char* sub : {"compose", "blend", "refine", "attack", "edge-mask", "postprocess", "eval", "pipeline"}) {
    const Result r = forge_run({sub, "--help"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find(sub) != std::string::npos);
  }
  const Result top = forge_run({"--help"});
  CHECK(top.code == cli::kExitOk);
  CHECK(top.out.find("edge-mask") != std::string::npos);
}

TEST_CASE("usage errors exit 2 with help on stderr") {
  CHECK(forge_run({}).code == cli::kExitUsage);
  const Result unknown = forge_run({"sharpen"});
  CHECK(unknown.code == cli::kExitUsage);
  CHECK_FALSE(unknown.err.empty());
  CHECK(forge_run({"compose", "--bogus"}).code == cli::kExitUsage);
  CHECK(forge_run({"compose", "--source", "a.png"}).code == cli::kExitUsage);
  CHECK(forge_run({"blend", "--mode", "magic", "--source", "a", "--mask", "b", "--target", "c", "--out", "d"}).code ==
        cli::kExitUsage);
  CHECK(forge_run({"attack", "--image", "a", "--out", "b", "--kind", "jpeg"}).code == cli::kExitUsage);
  CHECK(forge_run({"attack", "--image", "a", "--out", "b", "--kind", "jpeg", "--quality", "70", "--ratio", "0.5"})
            .code == cli::kExitUsage);
  CHECK(forge_run({"attack", "--image", "a", "--out", "b", "--kind", "scale", "--ratio", "1.5"}).code ==
        cli::kExitUsage);
  CHECK(forge_run({"attack", "--image", "a", "--out", "b", "--kind", "jpeg", "--quality", "70", "--mask-out", "m"})
            .code == cli::kExitUsage);
  CHECK(forge_run({"refine", "--image", "a", "--mask", "b", "--target", "c", "--out", "d"}).code == cli::kExitUsage);
  CHECK(forge_run({"refine", "--image", "a", "--mask", "b", "--target", "c", "--out", "d", "--boundary", "p",
                   "--ground-truth-edge"})
            .code == cli::kExitUsage);
  CHECK(forge_run({"edge-mask", "--mask", "a", "--out", "b", "--radius", "0"}).code == cli::kExitUsage);
  CHECK(forge_run({"eval", "--manifest", "m", "--metric", "auc"}).code == cli::kExitUsage);
  CHECK(forge_run({"--log-level", "loud", "eval", "--manifest", "m"}).code == cli::kExitUsage);
}

TEST_CASE("processing failures exit 1") {
  TempDir dir;
  CHECK(forge_run({"edge-mask", "--mask", (dir / "missing.png").string(), "--out", (dir / "e.png").string()}).code ==
        cli::kExitFailure);
  CHECK(forge_run({"eval", "--manifest", (dir / "missing.jsonl").string()}).code == cli::kExitFailure);
  save_image(ImageTensor(4, 4, 3), dir / "rgb.png");
  CHECK(forge_run({"postprocess", "--mask", (dir / "rgb.png").string(), "--out", (dir / "o.png").string()}).code ==
        cli::kExitFailure);
}

TEST_CASE("compose and refine match the library") {
  Fixture f;
  const Result c = forge_run({"compose", "--source", f.p("s.png"), "--mask", f.p("k.png"), "--target", f.p("t.png"),
                              "--out", f.p("m.png"), "--mask-out", f.p("mk.png"), "--edge-out", f.p("e.png")});
  REQUIRE(c.code == cli::kExitOk);
  const CompositeSample expect = compose(f.s, f.k, f.tgt);
  CHECK(load_image(f.p("m.png")) == expect.image);
  CHECK(load_mask(f.p("mk.png")) == f.k);
  CHECK(load_mask(f.p("e.png")) == expect.edge);

  const Result r = forge_run({"refine", "--image", f.p("m.png"), "--mask", f.p("k.png"), "--target", f.p("t.png"),
                              "--out", f.p("r.png"), "--ground-truth-edge", "--mask-out", f.p("rk.png"),
                              "--edge-radius", "1"});
  REQUIRE(r.code == cli::kExitOk);
  const StructuringElement se(1);
  const CompositeSample refined = refine(expect.image, f.k, f.tgt, edge_mask(f.k, se), se);
  CHECK(load_image(f.p("r.png")) == refined.image);
  CHECK(load_mask(f.p("rk.png")) == (f.k & edge_mask(f.k, se).complement()));

  save_mask(t::rect_mask(12, 12, 3, 3, 1, 5), f.dir / "p.png");
  REQUIRE(forge_run({"refine", "--image", f.p("m.png"), "--mask", f.p("k.png"), "--target", f.p("t.png"), "--out",
                     f.p("r2.png"), "--boundary", f.p("p.png")})
              .code == cli::kExitOk);
  CHECK(load_image(f.p("r2.png")) == refine(expect.image, f.k, f.tgt, t::rect_mask(12, 12, 3, 3, 1, 5)).image);
}

TEST_CASE("blend through the command line") {
  Fixture f;
  SUBCASE("poisson identity blend is byte-identical to the target") {
    const Result r = forge_run({"blend", "--mode", "poisson", "--source", f.p("t.png"), "--mask", f.p("k.png"),
                                "--target", f.p("t.png"), "--out", f.p("b.png")});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(read_file(f.p("b.png")) == read_file(f.p("t.png")));
  }
  SUBCASE("poisson result and loss report match the library") {
    const Result r = forge_run({"blend", "--mode", "poisson", "--source", f.p("s.png"), "--mask", f.p("k.png"),
                                "--target", f.p("t.png"), "--out", f.p("b.png"), "--json"});
    REQUIRE(r.code == cli::kExitOk);
    const ImageTensor expected = poisson_blend(f.s, f.k, f.tgt);
    const ImageTensor got = load_image(f.p("b.png"));
    for (std::size_t i = 0; i < got.data().size(); ++i)
      CHECK(got.data()[i] == std::floor(expected.data()[i] * 255 + 0.5) / 255);
    const auto j = nlohmann::json::parse(r.out);
    for (const char* key : {"l_bg", "l_grad", "l_edge", "total", "n_bg", "n_fg", "n_edge"}) CHECK(j.contains(key));
  }
  SUBCASE("variational with a small iteration cap") {
    const Result r = forge_run({"blend", "--source", f.p("s.png"), "--mask", f.p("k.png"), "--target", f.p("t.png"),
                                "--out", f.p("v.png"), "--max-iters", "20", "--json"});
    REQUIRE(r.code == cli::kExitOk);
    BlendConfig cfg;
    cfg.max_iters = 20;
    const VariationalResult v = variational_blend(f.s, f.k, f.tgt, cfg);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["iterations"] == v.iterations);
    CHECK(j["total"].get<double>() == doctest::Approx(v.losses.total).epsilon(1e-6));
  }
  CHECK(forge_run({"blend", "--source", f.p("s.png"), "--mask", f.p("k.png"), "--target", f.p("t.png"), "--out",
                   f.p("v.png"), "--tol", "0"})
            .code == cli::kExitUsage);
}

TEST_CASE("attack, edge-mask and postprocess") {
  Fixture f;
  REQUIRE(forge_run({"attack", "--image", f.p("s.png"), "--out", f.p("j.png"), "--kind", "jpeg", "--quality", "50"})
              .code == cli::kExitOk);
  save_image(attack_jpeg(f.s, 50), f.dir / "j_ref.png");
  CHECK(read_file(f.p("j.png")) == read_file(f.p("j_ref.png")));

  REQUIRE(forge_run({"attack", "--image", f.p("s.png"), "--out", f.p("sc.png"), "--kind", "scale", "--ratio", "0.5",
                     "--mask", f.p("k.png"), "--mask-out", f.p("sck.png")})
              .code == cli::kExitOk);
  CHECK(load_image(f.p("sc.png")).height() == 6);
  CHECK(load_mask(f.p("sck.png")) == resize_nearest(f.k, 6, 6));

  save_mask(BinaryMask(9, 9, true), f.dir / "ones.png");
  save_mask(BinaryMask(9, 9, false), f.dir / "zeros.png");
  for (const char* m : {"ones.png", "zeros.png"}) {
    REQUIRE(forge_run({"edge-mask", "--mask", f.p(m), "--radius", "2", "--out", f.p("e.png")}).code == cli::kExitOk);
    CHECK(load_mask(f.p("e.png")) == BinaryMask(9, 9));
  }
  REQUIRE(forge_run({"edge-mask", "--mask", f.p("k.png"), "--radius", "1", "--out", f.p("e.png")}).code == cli::kExitOk);
  CHECK(load_mask(f.p("e.png")) == edge_mask(f.k, StructuringElement(1)));

  BinaryMask specks = t::rect_mask(16, 16, 2, 2, 8, 8);
  specks.set(14, 14, true);
  save_mask(specks, f.dir / "specks.png");
  REQUIRE(forge_run({"postprocess", "--mask", f.p("specks.png"), "--out", f.p("clean.png"), "--min-area", "20"}).code ==
          cli::kExitOk);
  CHECK(load_mask(f.p("clean.png")) == t::rect_mask(16, 16, 2, 2, 8, 8));
}

TEST_CASE("eval reports perfect predictions as 1") {
  TempDir dir;
  t::Rng rng(7);
  std::ofstream manifest(dir / "pairs.jsonl");
  for (int i = 0; i < 3; ++i) {
    BinaryMask g = t::random_mask(rng, 8, 8);
    g.set(0, 0, true);
    const std::string id = "img" + std::to_string(i);
    save_mask(g, dir / (id + "_gt.png"));
    save_mask(g, dir / (id + "_pred.png"));
    manifest << R"({"id": ")" << id << R"(", "prediction": ")" << id << R"(_pred.png", "ground_truth": ")" << id
             << "_gt.png\"}\n";
  }
  manifest.close();
  const Result r = forge_run({"eval", "--manifest", (dir / "pairs.jsonl").string(), "--metric", "f1", "--mode",
                              "per-image", "--json"});
  REQUIRE(r.code == cli::kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["dataset_f1"] == 1.0);
  CHECK(j["mode"] == "per_image_threshold");
  CHECK(j["per_image"].size() == 3);
  CHECK(j["per_image"][1]["id"] == "img1");

  const Result g = forge_run({"eval", "--manifest", (dir / "pairs.jsonl").string(), "--mode", "global"});
  REQUIRE(g.code == cli::kExitOk);
  CHECK(g.out.find("F1 1.000000") != std::string::npos);
}

TEST_CASE("pipeline subcommand") {
  Fixture f;
  {
    std::ofstream m(f.dir / "m.jsonl");
    m << R"({"id": "good", "source": "s.png", "mask": "k.png", "target": "t.png", "steps": ["compose", "refine"]})"
      << "\n"
      << R"({"id": "bad", "source": "missing.png", "mask": "k.png", "target": "t.png", "steps": ["compose"]})" << "\n";
  }
  const Result r = forge_run({"pipeline", "--manifest", f.p("m.jsonl"), "--jobs", "2", "--json"});
  CHECK(r.code == cli::kExitFailure);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j.size() == 2);
  CHECK(j[0]["status"] == "ok");
  CHECK(j[1]["status"] == "failed");
  CHECK(fs::exists(f.dir / "outputs" / "good" / "1_refine.png"));

  {
    std::ofstream m(f.dir / "bad.jsonl");
    m << "{\"id\": 1}\n";
  }
  CHECK(forge_run({"pipeline", "--manifest", f.p("bad.jsonl")}).code == cli::kExitFailure);
}
