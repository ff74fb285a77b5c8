#include "forge/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "log.hpp"
#include "forge/morphology.hpp"
#include "forge/serialization.hpp"

namespace forge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string step_name(const PipelineStep& step) {
  struct Visitor {
    std::string operator()(const ComposeStep&) const { return "compose"; }
    std::string operator()(const BlendStep&) const { return "blend"; }
    std::string operator()(const RefineStep&) const { return "refine"; }
    std::string operator()(const AttackStep&) const { return "attack"; }
  };
  return std::visit(Visitor{}, step);
}

// ---------------------------------------------------------------------------
// Manifest parsing
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void fail_line(std::size_t line, const std::string& msg) {
  throw ManifestError("line " + std::to_string(line) + ": " + msg);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, std::size_t line, const std::string& what) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      fail_line(line, what + ": unknown key '" + key + "'");
    }
  }
}

const json& require(const json& j, const char* key, std::size_t line, const std::string& what) {
  if (!j.contains(key)) fail_line(line, what + ": missing required field '" + key + "'");
  return j[key];
}

std::string require_string(const json& j, const char* key, std::size_t line, const std::string& what) {
  const json& v = require(j, key, line, what);
  if (!v.is_string()) fail_line(line, what + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

double number_field(const json& j, const char* key, double fallback, std::size_t line) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) fail_line(line, std::string("blend: '") + key + "' must be a number");
  return j[key].get<double>();
}

PipelineStep parse_step(const json& raw, const fs::path& base, std::size_t line) {
  std::string name;
  json params = json::object();
  if (raw.is_string()) {
    name = raw.get<std::string>();
  } else if (raw.is_object() && raw.size() == 1) {
    name = raw.begin().key();
    params = raw.begin().value();
    if (!params.is_object()) fail_line(line, "step '" + name + "': parameters must be an object");
  } else {
    fail_line(line, "each step must be a name or a single-key object");
  }

  if (name == "compose") {
    check_keys(params, {}, line, "compose");
    return ComposeStep{};
  }
  if (name == "blend") {
    check_keys(params, {"mode", "lambda_grad", "lambda_edge", "solver_tol", "max_iters", "step_size"}, line, "blend");
    BlendStep step;
    if (params.contains("mode")) {
      const json& m = params["mode"];
      if (m == "poisson") {
        step.mode = BlendStep::Mode::poisson;
      } else if (m == "variational") {
        step.mode = BlendStep::Mode::variational;
      } else {
        fail_line(line, "blend: mode must be 'poisson' or 'variational'");
      }
    }
    BlendConfig& cfg = step.config;
    cfg.lambda_grad = number_field(params, "lambda_grad", cfg.lambda_grad, line);
    cfg.lambda_edge = number_field(params, "lambda_edge", cfg.lambda_edge, line);
    cfg.solver_tol = number_field(params, "solver_tol", cfg.solver_tol, line);
    cfg.step_size = number_field(params, "step_size", cfg.step_size, line);
    if (params.contains("max_iters")) {
      if (!params["max_iters"].is_number_integer()) fail_line(line, "blend: 'max_iters' must be an integer");
      cfg.max_iters = params["max_iters"].get<int>();
    }
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      fail_line(line, std::string("blend: ") + e.what());
    }
    return step;
  }
  if (name == "refine") {
    check_keys(params, {"boundary"}, line, "refine");
    RefineStep step;
    if (params.contains("boundary")) {
      if (!params["boundary"].is_string()) fail_line(line, "refine: 'boundary' must be a string");
      const std::string b = params["boundary"];
      if (b != "ground_truth_edge") step.boundary = resolve(base, b);
    }
    return step;
  }
  if (name == "attack") {
    try {
      return AttackStep{attack_from_json(params)};
    } catch (const std::invalid_argument& e) {
      fail_line(line, e.what());
    }
  }
  fail_line(line, "unknown step '" + name + "'");
}

SampleManifestEntry parse_entry(const json& j, const fs::path& base, std::size_t line) {
  if (!j.is_object()) fail_line(line, "entry must be a JSON object");
  check_keys(j, {"id", "source", "mask", "target", "steps", "outputs", "size_policy", "edge_radius", "mask_threshold"},
             line, "entry");
  SampleManifestEntry e;
  e.line = line;
  e.id = require_string(j, "id", line, "entry");
  if (e.id.empty() || e.id.find_first_of("/\\") != std::string::npos || e.id == "." || e.id == "..") {
    fail_line(line, "entry: id must be a non-empty name without path separators");
  }
  e.source = resolve(base, require_string(j, "source", line, "entry"));
  e.mask = resolve(base, require_string(j, "mask", line, "entry"));
  e.target = resolve(base, require_string(j, "target", line, "entry"));
  e.outputs = j.contains("outputs") ? resolve(base, require_string(j, "outputs", line, "entry")) : resolve(base, "outputs");

  if (j.contains("size_policy")) {
    const std::string p = require_string(j, "size_policy", line, "entry");
    if (p == "reject") {
      e.size_policy = SizePolicy::reject;
    } else if (p == "center_crop") {
      e.size_policy = SizePolicy::center_crop;
    } else {
      fail_line(line, "entry: size_policy must be 'reject' or 'center_crop'");
    }
  }
  if (j.contains("edge_radius")) {
    if (!j["edge_radius"].is_number_integer() || j["edge_radius"].get<int>() < 1) {
      fail_line(line, "entry: edge_radius must be an integer >= 1");
    }
    e.edge_radius = j["edge_radius"];
  }
  if (j.contains("mask_threshold")) {
    if (!j["mask_threshold"].is_number_integer() || j["mask_threshold"].get<int>() < 0 ||
        j["mask_threshold"].get<int>() > 255) {
      fail_line(line, "entry: mask_threshold must be an integer in [0, 255]");
    }
    e.mask_threshold = j["mask_threshold"];
  }

  const json& steps = require(j, "steps", line, "entry");
  if (!steps.is_array() || steps.empty()) fail_line(line, "entry: steps must be a non-empty array");
  for (const auto& s : steps) e.steps.push_back(parse_step(s, base, line));
  if (!std::holds_alternative<ComposeStep>(e.steps.front())) fail_line(line, "entry: first step must be compose");
  for (auto& s : e.steps) {
    if (auto* b = std::get_if<BlendStep>(&s)) b->config.edge_radius = e.edge_radius;
  }
  return e;
}

template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      fail_line(line, std::string("malformed JSON: ") + e.what());
    }
    fn(j, line);
  }
}

std::ifstream open_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest '" + path.string() + "'");
  return in;
}

fs::path manifest_dir(const fs::path& path) {
  const fs::path parent = fs::absolute(path).parent_path();
  return parent.empty() ? fs::current_path() : parent;
}

}  // namespace

std::vector<SampleManifestEntry> parse_manifest(std::istream& in, const fs::path& base_dir) {
  std::vector<SampleManifestEntry> entries;
  std::map<std::string, std::size_t> seen;
  for_each_json_line(in, [&](const json& j, std::size_t line) {
    SampleManifestEntry e = parse_entry(j, base_dir, line);
    if (auto it = seen.find(e.id); it != seen.end()) {
      throw ManifestError("duplicate id '" + e.id + "' on lines " + std::to_string(it->second) + " and " +
                          std::to_string(line));
    }
    seen.emplace(e.id, line);
    entries.push_back(std::move(e));
  });
  return entries;
}

std::vector<SampleManifestEntry> parse_manifest(const fs::path& path) {
  std::ifstream in = open_manifest(path);
  return parse_manifest(in, manifest_dir(path));
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xF]);
  }
  return hex;
}

json ProvenanceRecord::to_json() const {
  json j;
  j["id"] = id;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["inputs"] = inputs;
  j["tool_version"] = tool_version;
  j["steps"] = json::array();
  for (const auto& s : steps) {
    json step;
    step["index"] = s.index;
    step["name"] = s.name;
    step["params"] = s.params;
    step["image"] = {{"path", s.image.path}, {"sha256", s.image.sha256}};
    step["mask"] = {{"path", s.mask.path}, {"sha256", s.mask.sha256}};
    if (s.losses) step["losses"] = *s.losses;
    j["steps"].push_back(std::move(step));
  }
  return j;
}

namespace {

struct PipelineState {
  ImageTensor source;
  BinaryMask mask;
  ImageTensor target;
  ImageTensor image;
};

PipelineState load_inputs(const SampleManifestEntry& e) {
  PipelineState st;
  st.source = load_image(e.source);
  st.mask = load_mask(e.mask, e.mask_threshold);
  st.target = load_image(e.target);
  if (!same_shape(st.source, st.mask)) throw DimensionError("source and mask differ in size");
  if (st.source.channels() != st.target.channels()) throw DimensionError("source and target differ in channel count");
  if (st.source.height() != st.target.height() || st.source.width() != st.target.width()) {
    if (e.size_policy == SizePolicy::reject) {
      std::ostringstream os;
      os << "source is " << st.source.height() << "x" << st.source.width() << " but target is "
         << st.target.height() << "x" << st.target.width() << " (size_policy=reject)";
      throw DimensionError(os.str());
    }
    const int h = std::min(st.source.height(), st.target.height());
    const int w = std::min(st.source.width(), st.target.width());
    auto center = [&](int full, int keep) { return (full - keep) / 2; };
    st.source = crop(st.source, center(st.source.height(), h), center(st.source.width(), w), h, w);
    st.mask = crop(st.mask, center(st.mask.height(), h), center(st.mask.width(), w), h, w);
    st.target = crop(st.target, center(st.target.height(), h), center(st.target.width(), w), h, w);
  }
  st.image = st.target;
  return st;
}

json blend_params(const BlendStep& b) {
  json p;
  p["mode"] = b.mode == BlendStep::Mode::poisson ? "poisson" : "variational";
  p["lambda_grad"] = b.config.lambda_grad;
  p["lambda_edge"] = b.config.lambda_edge;
  p["solver_tol"] = b.config.solver_tol;
  p["step_size"] = b.config.step_size;
  p["max_iters"] = b.config.max_iters ? json(*b.config.max_iters) : json(nullptr);
  p["edge_radius"] = b.config.edge_radius;
  return p;
}

}  // namespace

ProvenanceRecord run_entry(const SampleManifestEntry& e) {
  ProvenanceRecord rec;
  rec.id = e.id;
  rec.inputs = {{"source", e.source.generic_string()},
                {"mask", e.mask.generic_string()},
                {"target", e.target.generic_string()},
                {"size_policy", e.size_policy == SizePolicy::reject ? "reject" : "center_crop"},
                {"edge_radius", e.edge_radius},
                {"mask_threshold", e.mask_threshold}};
  const fs::path dir = e.outputs / e.id;

  try {
    fs::create_directories(dir);
    rec.inputs["source_sha256"] = sha256_file(e.source);
    rec.inputs["mask_sha256"] = sha256_file(e.mask);
    rec.inputs["target_sha256"] = sha256_file(e.target);
    PipelineState st = load_inputs(e);
    const StructuringElement se(e.edge_radius);

    for (std::size_t i = 0; i < e.steps.size(); ++i) {
      const PipelineStep& step = e.steps[i];
      StepRecord sr;
      sr.index = i;
      sr.name = step_name(step);
      sr.params = json::object();

      if (std::holds_alternative<ComposeStep>(step)) {
        st.image = compose(st.source, st.mask, st.target, se).image;
      } else if (const auto* b = std::get_if<BlendStep>(&step)) {
        sr.params = blend_params(*b);
        if (b->mode == BlendStep::Mode::poisson) {
          st.image = poisson_blend(st.source, st.mask, st.target, b->config);
          sr.losses = to_json(total_objective(st.image, st.source, st.target, st.mask, edge_mask(st.mask, se), b->config));
        } else {
          VariationalResult r = variational_blend(st.source, st.mask, st.target, b->config);
          st.image = std::move(r.image);
          json losses = to_json(r.losses);
          losses["iterations"] = r.iterations;
          sr.losses = std::move(losses);
        }
      } else if (const auto* r = std::get_if<RefineStep>(&step)) {
        BinaryMask boundary;
        if (r->boundary) {
          boundary = load_mask(*r->boundary);
          sr.params["boundary"] = r->boundary->generic_string();
          sr.params["boundary_sha256"] = sha256_file(*r->boundary);
        } else {
          boundary = edge_mask(st.mask, se);
          sr.params["boundary"] = "ground_truth_edge";
        }
        CompositeSample out = refine(st.image, st.mask, st.target, boundary, se);
        st.image = std::move(out.image);
        st.mask = std::move(out.mask);
      } else if (const auto* a = std::get_if<AttackStep>(&step)) {
        sr.params = to_json(a->spec);
        auto [img, mask] = apply_attack(st.image, st.mask, a->spec);
        if (a->spec.kind == AttackSpec::Kind::scale) {
          // Keep S and T aligned with the attacked image for any later step.
          st.source = resize_bilinear(st.source, img.height(), img.width());
          st.target = resize_bilinear(st.target, img.height(), img.width());
        }
        st.image = std::move(img);
        st.mask = std::move(mask);
      }

      const std::string stem = std::to_string(i) + "_" + sr.name;
      sr.image.path = stem + ".png";
      sr.mask.path = stem + "_mask.png";
      save_image(st.image, dir / sr.image.path);
      save_mask(st.mask, dir / sr.mask.path);
      sr.image.sha256 = sha256_file(dir / sr.image.path);
      sr.mask.sha256 = sha256_file(dir / sr.mask.path);
      rec.steps.push_back(std::move(sr));
    }
    rec.status = "ok";
  } catch (const std::exception& ex) {
    rec.status = "failed";
    rec.error = ex.what();
    log::error("entry '{}': {}", e.id, ex.what());
  }

  try {
    fs::create_directories(dir);
    std::ofstream out(dir / "provenance.json", std::ios::binary);
    out << rec.to_json().dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed");
  } catch (const std::exception& ex) {
    log::error("entry '{}': cannot write provenance: {}", e.id, ex.what());
    if (rec.status == "ok") {
      rec.status = "failed";
      rec.error = std::string("cannot write provenance: ") + ex.what();
    }
  }
  return rec;
}

std::vector<ProvenanceRecord> run_pipeline(const std::vector<SampleManifestEntry>& entries, unsigned jobs) {
  std::vector<ProvenanceRecord> records(entries.size());
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, entries.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      log::debug("processing entry '{}'", entries[i].id);
      records[i] = run_entry(entries[i]);
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Evaluation manifests
// ---------------------------------------------------------------------------

std::vector<EvalPair> parse_eval_manifest(std::istream& in, const fs::path& base_dir) {
  std::vector<EvalPair> pairs;
  std::map<std::string, std::size_t> seen;
  for_each_json_line(in, [&](const json& j, std::size_t line) {
    if (!j.is_object()) fail_line(line, "entry must be a JSON object");
    check_keys(j, {"id", "prediction", "ground_truth", "resize"}, line, "eval entry");
    EvalPair p;
    p.line = line;
    p.id = require_string(j, "id", line, "eval entry");
    p.prediction = resolve(base_dir, require_string(j, "prediction", line, "eval entry"));
    p.ground_truth = resolve(base_dir, require_string(j, "ground_truth", line, "eval entry"));
    if (j.contains("resize")) {
      const std::string r = require_string(j, "resize", line, "eval entry");
      if (r == "none") {
        p.resize = ResizePolicy::none;
      } else if (r == "ground_truth") {
        p.resize = ResizePolicy::ground_truth;
      } else if (r == "prediction") {
        p.resize = ResizePolicy::prediction;
      } else {
        fail_line(line, "eval entry: resize must be 'none', 'ground_truth' or 'prediction'");
      }
    }
    if (auto it = seen.find(p.id); it != seen.end()) {
      throw ManifestError("duplicate id '" + p.id + "' on lines " + std::to_string(it->second) + " and " +
                          std::to_string(line));
    }
    seen.emplace(p.id, line);
    pairs.push_back(std::move(p));
  });
  return pairs;
}

std::vector<EvalPair> parse_eval_manifest(const fs::path& path) {
  std::ifstream in = open_manifest(path);
  return parse_eval_manifest(in, manifest_dir(path));
}

std::pair<SoftMask, BinaryMask> load_eval_pair(const EvalPair& pair) {
  SoftMask pred = load_soft_mask(pair.prediction);
  BinaryMask gt = load_mask(pair.ground_truth);
  if (pred.height() == gt.height() && pred.width() == gt.width()) return {std::move(pred), std::move(gt)};
  switch (pair.resize) {
    case ResizePolicy::ground_truth:
      gt = resize_nearest(gt, pred.height(), pred.width());
      break;
    case ResizePolicy::prediction: {
      std::vector<double> values(pred.data().begin(), pred.data().end());
      const ImageTensor img(pred.height(), pred.width(), 1, std::move(values));
      pred = to_soft(resize_bilinear(img, gt.height(), gt.width()));
      break;
    }
    case ResizePolicy::none:
      throw DimensionError("'" + pair.id + "': prediction and ground truth differ in size (resize=none)");
  }
  return {std::move(pred), std::move(gt)};
}

}  // namespace forge
