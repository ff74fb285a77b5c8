#include <doctest.h>

#include <fstream>
#include <sstream>

#include "forge/dataset.hpp"
#include "forge/morphology.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace forge;
namespace fs = std::filesystem;
namespace t = forge::testing;
using t::TempDir;

namespace {

std::vector<SampleManifestEntry> parse(const std::string& text, const fs::path& base = "/data") {
  std::istringstream in(text);
  return parse_manifest(in, base);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

/// Writes s.png, k.png and t.png into `dir`.
void write_triple(const fs::path& dir, std::uint64_t seed, int h = 12, int w = 14) {
  t::Rng rng(seed);
  save_image(t::random_lattice_image(rng, h, w, 3), dir / "s.png");
  save_image(t::random_lattice_image(rng, h, w, 3), dir / "t.png");
  save_mask(t::rect_mask(h, w, 3, 4, 6, 7), dir / "k.png");
}

}  // namespace

TEST_CASE("manifest parsing") {
  CHECK(parse("").empty());
  CHECK(parse("\n   \n").empty());

  const auto one = parse(R"({"id": "a", "source": "s.png", "mask": "k.png", "target": "t.png", "steps": ["compose"]})");
  REQUIRE(one.size() == 1);
  CHECK(one[0].id == "a");
  CHECK(one[0].source == fs::path("/data/s.png"));
  CHECK(one[0].outputs == fs::path("/data/outputs"));
  CHECK(one[0].size_policy == SizePolicy::reject);
  CHECK(one[0].edge_radius == kDefaultEdgeRadius);
  CHECK(one[0].mask_threshold == 128);
  CHECK(one[0].line == 1);
  REQUIRE(one[0].steps.size() == 1);
  CHECK(step_name(one[0].steps[0]) == "compose");

  const auto full = parse(
      R"({"id": "b", "source": "/abs/s.png", "mask": "k.png", "target": "t.png", "outputs": "out", "edge_radius": 3,)"
      R"( "size_policy": "center_crop", "steps": ["compose", {"blend": {"mode": "poisson", "lambda_edge": 0.5}},)"
      R"( {"refine": {"boundary": "ground_truth_edge"}}, {"refine": {"boundary": "p.png"}},)"
      R"( {"attack": {"kind": "scale", "ratio": 0.5}}]})");
  REQUIRE(full.size() == 1);
  const auto& e = full[0];
  CHECK(e.source == fs::path("/abs/s.png"));
  CHECK(e.outputs == fs::path("/data/out"));
  CHECK(e.size_policy == SizePolicy::center_crop);
  REQUIRE(e.steps.size() == 5);
  const auto& blend = std::get<BlendStep>(e.steps[1]);
  CHECK(blend.mode == BlendStep::Mode::poisson);
  CHECK(blend.config.lambda_edge == 0.5);
  CHECK(blend.config.lambda_grad == 1.0);
  CHECK(blend.config.edge_radius == 3);
  CHECK_FALSE(std::get<RefineStep>(e.steps[2]).boundary.has_value());
  CHECK(*std::get<RefineStep>(e.steps[3]).boundary == fs::path("/data/p.png"));
  CHECK(std::get<AttackStep>(e.steps[4]).spec.kind == AttackSpec::Kind::scale);
}

TEST_CASE("manifest errors name their lines") {
  const std::string a = R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose"]})";
  const std::string b = R"({"id": "b", "source": "s", "mask": "k", "target": "t", "steps": ["compose"]})";
  const std::string text = "\n\n" + a + "\n" + b + "\n\n\n" + a + "\n";
  CHECK_THROWS_WITH_AS(parse(text), "duplicate id 'a' on lines 3 and 7", ManifestError);

  auto rejects = [](const std::string& line, const char* fragment) {
    CHECK_THROWS_WITH_AS(parse(line), doctest::Contains(fragment), ManifestError);
  };
  rejects("{not json", "line 1");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose"], "colour": 1})",
          "unknown key 'colour'");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": []})", "steps");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["refine"]})", "first step");
  rejects(R"({"id": "a", "mask": "k", "target": "t", "steps": ["compose"]})", "'source'");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose", "sharpen"]})",
          "unknown step");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose", {"blend": {"mode": "x"}}]})",
          "mode");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose", {"blend": {"speed": 1}}]})",
          "unknown key 'speed'");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose", {"attack": {"kind": "jpeg"}}]})",
          "line 1");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose", {"attack": {"kind": "jpeg", "quality": 70, "ratio": 0.5}}]})",
          "line 1");
  rejects(R"({"id": "../x", "source": "s", "mask": "k", "target": "t", "steps": ["compose"]})", "id");
  rejects(R"({"id": "a", "source": "s", "mask": "k", "target": "t", "steps": ["compose"], "size_policy": "stretch"})",
          "size_policy");
  rejects(R"([1, 2])", "object");
  CHECK_THROWS_AS(parse_manifest(fs::path("/nonexistent/manifest.jsonl")), ManifestError);
}

TEST_CASE("pipeline: compose with identical source and target reproduces the target") {
  TempDir dir;
  t::Rng rng(1);
  const ImageTensor img = t::random_lattice_image(rng, 9, 9, 3);
  save_image(img, dir / "s.png");
  save_image(img, dir / "t.png");
  save_mask(t::rect_mask(9, 9, 2, 2, 4, 4), dir / "k.png");
  write_file(dir / "m.jsonl", R"({"id": "same", "source": "s.png", "mask": "k.png", "target": "t.png", "steps": ["compose"]})");
  const auto records = run_pipeline(parse_manifest(dir / "m.jsonl"), 1);
  REQUIRE(records.size() == 1);
  REQUIRE(records[0].ok());
  CHECK(load_image(dir / "outputs" / "same" / "0_compose.png") == img);
  CHECK(fs::exists(dir / "outputs" / "same" / "provenance.json"));
}

TEST_CASE("pipeline: refine with the ground-truth edge shrinks the mask") {
  TempDir dir;
  write_triple(dir.path(), 2);
  write_file(dir / "m.jsonl",
             R"({"id": "r", "source": "s.png", "mask": "k.png", "target": "t.png", "edge_radius": 1, )"
             R"("steps": ["compose", {"refine": {"boundary": "ground_truth_edge"}}]})");
  const auto records = run_pipeline(parse_manifest(dir / "m.jsonl"), 1);
  REQUIRE(records[0].ok());
  const BinaryMask k = load_mask(dir / "k.png");
  const BinaryMask expected = k & edge_mask(k, StructuringElement(1)).complement();
  CHECK(load_mask(dir / "outputs" / "r" / "1_refine_mask.png") == expected);
  CHECK(load_mask(dir / "outputs" / "r" / "0_compose_mask.png") == k);
}

TEST_CASE("pipeline: outputs are deterministic and recorded in provenance") {
  TempDir dir;
  write_triple(dir.path(), 3);
  std::string manifest;
  for (int i = 0; i < 4; ++i) {
    manifest += R"({"id": "e)" + std::to_string(i) +
                R"(", "source": "s.png", "mask": "k.png", "target": "t.png", "steps": ["compose", )"
                R"({"blend": {"mode": "variational", "max_iters": 30}}, "refine", {"attack": {"kind": "jpeg", "quality": 70}}]})"
                "\n";
  }
  write_file(dir / "m.jsonl", manifest);
  const auto entries = parse_manifest(dir / "m.jsonl");

  auto snapshot = [&] {
    std::map<std::string, std::string> files;
    for (const auto& f : fs::recursive_directory_iterator(dir / "outputs"))
      if (f.is_regular_file()) files[fs::relative(f.path(), dir.path()).generic_string()] = read_file(f.path());
    return files;
  };
  const auto first_records = run_pipeline(entries, 1);
  const auto first = snapshot();
  fs::remove_all(dir / "outputs");
  const auto second_records = run_pipeline(entries, 3);
  const auto second = snapshot();
  CHECK(first.size() == 4 * (4 * 2 + 1));
  CHECK(first == second);

  for (const auto& rec : first_records) {
    REQUIRE(rec.ok());
    REQUIRE(rec.steps.size() == 4);
    CHECK(rec.steps[1].losses.has_value());
    for (const auto& s : rec.steps) {
      CHECK(s.image.sha256 == sha256_file(dir / "outputs" / rec.id / s.image.path));
      CHECK(s.mask.sha256 == sha256_file(dir / "outputs" / rec.id / s.mask.path));
    }
    const auto prov = nlohmann::json::parse(read_file(dir / "outputs" / rec.id / "provenance.json"));
    CHECK(prov["tool_version"] == kToolVersion);
    CHECK(prov["inputs"]["source_sha256"] == sha256_file(dir / "s.png"));
    CHECK(prov["steps"][3]["params"]["quality"] == 70);
  }
}

TEST_CASE("pipeline: size mismatch policies") {
  TempDir dir;
  t::Rng rng(4);
  save_image(t::random_lattice_image(rng, 10, 10, 1), dir / "s.png");
  save_mask(t::rect_mask(10, 10, 3, 3, 4, 4), dir / "k.png");
  save_image(t::random_lattice_image(rng, 8, 12, 1), dir / "t.png");
  write_file(dir / "m.jsonl",
             R"({"id": "rej", "source": "s.png", "mask": "k.png", "target": "t.png", "steps": ["compose"]})"
             "\n"
             R"({"id": "crop", "source": "s.png", "mask": "k.png", "target": "t.png", "steps": ["compose"], "size_policy": "center_crop"})");
  const auto records = run_pipeline(parse_manifest(dir / "m.jsonl"), 2);
  REQUIRE(records.size() == 2);
  CHECK_FALSE(records[0].ok());
  CHECK(records[0].error.find("size_policy") != std::string::npos);
  CHECK(fs::exists(dir / "outputs" / "rej" / "provenance.json"));
  REQUIRE(records[1].ok());
  const ImageTensor out = load_image(dir / "outputs" / "crop" / "0_compose.png");
  CHECK(out.height() == 8);
  CHECK(out.width() == 10);
}

TEST_CASE("pipeline: scale attack shrinks image and mask together") {
  TempDir dir;
  write_triple(dir.path(), 5, 20, 20);
  write_file(dir / "m.jsonl",
             R"({"id": "s", "source": "s.png", "mask": "k.png", "target": "t.png", )"
             R"("steps": ["compose", {"attack": {"kind": "scale", "ratio": 0.5}}, {"blend": {"mode": "poisson"}}]})");
  const auto records = run_pipeline(parse_manifest(dir / "m.jsonl"), 1);
  REQUIRE(records[0].ok());
  const ImageTensor img = load_image(dir / "outputs" / "s" / "2_blend.png");
  const BinaryMask mask = load_mask(dir / "outputs" / "s" / "2_blend_mask.png");
  CHECK(img.height() == 10);
  CHECK(mask.width() == 10);
}

TEST_CASE("eval manifest") {
  std::istringstream in(R"({"id": "x", "prediction": "p.png", "ground_truth": "g.png"})"
                        "\n"
                        R"({"id": "y", "prediction": "p.png", "ground_truth": "g.png", "resize": "ground_truth"})");
  const auto pairs = parse_eval_manifest(in, "/base");
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].prediction == fs::path("/base/p.png"));
  CHECK(pairs[0].resize == ResizePolicy::none);
  CHECK(pairs[1].resize == ResizePolicy::ground_truth);

  std::istringstream bad(R"({"id": "x", "prediction": "p.png", "ground_truth": "g.png", "weight": 2})");
  CHECK_THROWS_AS(parse_eval_manifest(bad, "/base"), ManifestError);

  TempDir dir;
  save_image(ImageTensor(4, 4, 1, 0.5), dir / "p.png");
  save_mask(BinaryMask(8, 8, true), dir / "g.png");
  EvalPair pair{"z", dir / "p.png", dir / "g.png", ResizePolicy::none, 1};
  CHECK_THROWS_AS(load_eval_pair(pair), DimensionError);
  pair.resize = ResizePolicy::ground_truth;
  auto [p1, g1] = load_eval_pair(pair);
  CHECK(g1.height() == 4);
  pair.resize = ResizePolicy::prediction;
  auto [p2, g2] = load_eval_pair(pair);
  CHECK(p2.height() == 8);
  CHECK(p2.at(7, 7) == doctest::Approx(128.0 / 255));
}
