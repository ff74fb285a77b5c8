#include "forge/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "forge/blend.hpp"
#include "forge/compositor.hpp"
#include "forge/dataset.hpp"
#include "forge/image.hpp"
#include "forge/metrics.hpp"
#include "forge/morphology.hpp"
#include "forge/serialization.hpp"
#include "log.hpp"

namespace forge::cli {

namespace {

// Raised for flag combinations CLI11 cannot express; maps to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ComposeArgs {
  std::string source, mask, target, out, mask_out, edge_out;
  int edge_radius = kDefaultEdgeRadius;
  int mask_threshold = 128;
};

struct BlendArgs {
  std::string mode = "variational";
  std::string source, mask, target, out;
  double lambda_grad = BlendConfig{}.lambda_grad;
  double lambda_edge = BlendConfig{}.lambda_edge;
  double tol = BlendConfig{}.solver_tol;
  std::optional<int> max_iters;
  double step_size = BlendConfig{}.step_size;
  int edge_radius = kDefaultEdgeRadius;
  int mask_threshold = 128;
  bool json = false;
};

struct RefineArgs {
  std::string image, mask, target, out, boundary, mask_out, edge_out;
  bool ground_truth_edge = false;
  int edge_radius = kDefaultEdgeRadius;
  int mask_threshold = 128;
};

struct AttackArgs {
  std::string image, out, kind, mask, mask_out;
  std::optional<int> quality;
  std::optional<double> ratio;
};

struct EdgeArgs {
  std::string mask, out;
  int radius = kDefaultEdgeRadius;
};

struct PostprocessArgs {
  std::string mask, out;
  std::size_t min_area = kDefaultMinComponentArea;
  int dilate_radius = kDefaultPostprocessDilateRadius;
};

struct EvalArgs {
  std::string manifest;
  std::string metric = "f1";
  std::string mode = "per-image";
  bool json = false;
};

struct PipelineArgs {
  std::string manifest;
  unsigned jobs = 0;
  bool json = false;
};

int do_compose(const ComposeArgs& a, std::ostream&) {
  const ImageTensor s = load_image(a.source);
  const BinaryMask k = load_mask(a.mask, a.mask_threshold);
  const ImageTensor t = load_image(a.target);
  const CompositeSample out = compose(s, k, t, StructuringElement(a.edge_radius));
  save_image(out.image, a.out);
  if (!a.mask_out.empty()) save_mask(out.mask, a.mask_out);
  if (!a.edge_out.empty()) save_mask(out.edge, a.edge_out);
  return kExitOk;
}

int do_blend(const BlendArgs& a, std::ostream& out) {
  BlendConfig cfg;
  cfg.lambda_grad = a.lambda_grad;
  cfg.lambda_edge = a.lambda_edge;
  cfg.solver_tol = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.step_size = a.step_size;
  cfg.edge_radius = a.edge_radius;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const ImageTensor s = load_image(a.source);
  const BinaryMask k = load_mask(a.mask, a.mask_threshold);
  const ImageTensor t = load_image(a.target);
  ImageTensor result;
  nlohmann::json report;
  if (a.mode == "poisson") {
    result = poisson_blend(s, k, t, cfg);
    report = to_json(total_objective(result, s, t, k, edge_mask(k, StructuringElement(a.edge_radius)), cfg));
  } else {
    VariationalResult r = variational_blend(s, k, t, cfg);
    result = std::move(r.image);
    report = to_json(r.losses);
    report["iterations"] = r.iterations;
  }
  save_image(result, a.out);
  log::info("blend ({}): total objective {}", a.mode, report["total"].get<double>());
  if (a.json) out << report.dump() << '\n';
  return kExitOk;
}

int do_refine(const RefineArgs& a, std::ostream&) {
  const ImageTensor m = load_image(a.image);
  const BinaryMask k = load_mask(a.mask, a.mask_threshold);
  const ImageTensor t = load_image(a.target);
  const StructuringElement se(a.edge_radius);
  const BinaryMask p = a.ground_truth_edge ? edge_mask(k, se) : load_mask(a.boundary);
  const CompositeSample out = refine(m, k, t, p, se);
  save_image(out.image, a.out);
  if (!a.mask_out.empty()) save_mask(out.mask, a.mask_out);
  if (!a.edge_out.empty()) save_mask(out.edge, a.edge_out);
  return kExitOk;
}

int do_attack(const AttackArgs& a, std::ostream&) {
  AttackSpec spec;
  try {
    if (a.kind == "jpeg") {
      if (!a.quality) throw UsageError("--kind jpeg requires --quality");
      if (a.ratio) throw UsageError("--ratio conflicts with --kind jpeg");
      spec = AttackSpec::jpeg(*a.quality);
    } else {
      if (!a.ratio) throw UsageError("--kind scale requires --ratio");
      if (a.quality) throw UsageError("--quality conflicts with --kind scale");
      spec = AttackSpec::scale(*a.ratio);
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!a.mask_out.empty() && a.mask.empty()) throw UsageError("--mask-out requires --mask");

  const ImageTensor img = load_image(a.image);
  const BinaryMask mask = a.mask.empty() ? BinaryMask(img.height(), img.width()) : load_mask(a.mask);
  const auto [attacked, attacked_mask] = apply_attack(img, mask, spec);
  save_image(attacked, a.out);
  if (!a.mask_out.empty()) save_mask(attacked_mask, a.mask_out);
  return kExitOk;
}

int do_edge(const EdgeArgs& a, std::ostream&) {
  save_mask(edge_mask(load_mask(a.mask), StructuringElement(a.radius)), a.out);
  return kExitOk;
}

int do_postprocess(const PostprocessArgs& a, std::ostream&) {
  save_mask(remove_small_components(load_mask(a.mask), a.min_area, a.dilate_radius), a.out);
  return kExitOk;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  const std::vector<EvalPair> pairs = parse_eval_manifest(a.manifest);
  if (pairs.empty()) throw std::runtime_error("eval manifest has no entries");
  std::vector<SoftMask> preds;
  std::vector<BinaryMask> gts;
  std::vector<std::string> ids;
  for (const auto& p : pairs) {
    auto [pred, gt] = load_eval_pair(p);
    preds.push_back(std::move(pred));
    gts.push_back(std::move(gt));
    ids.push_back(p.id);
  }
  const Metric metric = a.metric == "f1" ? Metric::f1 : Metric::mcc;
  const ThresholdMode mode = a.mode == "global" ? ThresholdMode::global_threshold : ThresholdMode::per_image_threshold;
  const EvalReport report = sweep_thresholds(preds, gts, mode, metric, ids);
  if (a.json) {
    out << to_json(report).dump() << '\n';
  } else {
    char line[128];
    std::snprintf(line, sizeof line, "%s over %zu images (%s): F1 %.6f  MCC %.6f\n", to_string(metric),
                  report.per_image.size(), to_string(mode), report.dataset_f1, report.dataset_mcc);
    out << line;
  }
  return kExitOk;
}

int do_pipeline(const PipelineArgs& a, std::ostream& out) {
  const std::vector<SampleManifestEntry> entries = parse_manifest(a.manifest);
  const std::vector<ProvenanceRecord> records = run_pipeline(entries, a.jobs);
  std::size_t failed = 0;
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : records) {
    if (!r.ok()) ++failed;
    if (a.json) all.push_back(r.to_json());
  }
  if (a.json) out << all.dump() << '\n';
  log::info("pipeline: {} entries, {} failed", records.size(), failed);
  if (failed) log::error("{} of {} entries failed", failed, records.size());
  return failed ? kExitFailure : kExitOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthesizes manipulated-image training data and scores manipulation segmentations.", "forge"};
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log-level", log_level, "error|warn|info|debug (overrides FORGE_LOG)")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  std::function<int(std::ostream&)> action;
  const auto mode_names = CLI::IsMember({"poisson", "variational"});

  ComposeArgs ca;
  auto* compose_cmd = app.add_subcommand("compose", "Copy-paste the masked source region onto the target");
  compose_cmd->add_option("--source", ca.source, "Source image S")->required();
  compose_cmd->add_option("--mask", ca.mask, "Mask K (single channel)")->required();
  compose_cmd->add_option("--target", ca.target, "Target image T")->required();
  compose_cmd->add_option("--out", ca.out, "Output composite M")->required();
  compose_cmd->add_option("--mask-out", ca.mask_out, "Optional output mask");
  compose_cmd->add_option("--edge-out", ca.edge_out, "Optional output edge band");
  compose_cmd->add_option("--edge-radius", ca.edge_radius, "Edge band radius")->capture_default_str()->check(CLI::PositiveNumber);
  compose_cmd->add_option("--mask-threshold", ca.mask_threshold, "Mask binarization level")->capture_default_str()->check(CLI::Range(0, 255));
  compose_cmd->callback([&] { action = [&](std::ostream& o) { return do_compose(ca, o); }; });

  BlendArgs ba;
  auto* blend_cmd = app.add_subcommand("blend", "Gradient-domain blend of the source into the target");
  blend_cmd->add_option("--mode", ba.mode, "poisson|variational")->capture_default_str()->check(mode_names);
  blend_cmd->add_option("--source", ba.source, "Source image S")->required();
  blend_cmd->add_option("--mask", ba.mask, "Mask K")->required();
  blend_cmd->add_option("--target", ba.target, "Target image T")->required();
  blend_cmd->add_option("--out", ba.out, "Output image")->required();
  blend_cmd->add_option("--lambda-grad", ba.lambda_grad, "Laplacian term weight")->capture_default_str();
  blend_cmd->add_option("--lambda-edge", ba.lambda_edge, "Edge term weight")->capture_default_str();
  blend_cmd->add_option("--tol", ba.tol, "Solver tolerance")->capture_default_str();
  blend_cmd->add_option("--max-iters", ba.max_iters, "Iteration cap (default depends on mode)");
  blend_cmd->add_option("--step-size", ba.step_size, "Initial descent step (variational)")->capture_default_str();
  blend_cmd->add_option("--edge-radius", ba.edge_radius, "Edge band radius")->capture_default_str()->check(CLI::PositiveNumber);
  blend_cmd->add_option("--mask-threshold", ba.mask_threshold, "Mask binarization level")->capture_default_str()->check(CLI::Range(0, 255));
  blend_cmd->add_flag("--json", ba.json, "Print the loss breakdown as JSON");
  blend_cmd->callback([&] { action = [&](std::ostream& o) { return do_blend(ba, o); }; });

  RefineArgs ra;
  auto* refine_cmd = app.add_subcommand("refine", "Replace predicted boundary pixels with target pixels");
  refine_cmd->add_option("--image", ra.image, "Manipulated image M")->required();
  refine_cmd->add_option("--mask", ra.mask, "Mask K")->required();
  refine_cmd->add_option("--target", ra.target, "Target image T")->required();
  refine_cmd->add_option("--out", ra.out, "Output image M'")->required();
  auto* boundary_opt = refine_cmd->add_option("--boundary", ra.boundary, "Predicted boundary mask P");
  auto* gt_edge_opt = refine_cmd->add_flag("--ground-truth-edge", ra.ground_truth_edge, "Use the edge band of K as P");
  boundary_opt->excludes(gt_edge_opt);
  gt_edge_opt->excludes(boundary_opt);
  refine_cmd->add_option("--mask-out", ra.mask_out, "Optional output mask K'");
  refine_cmd->add_option("--edge-out", ra.edge_out, "Optional output edge band of K'");
  refine_cmd->add_option("--edge-radius", ra.edge_radius, "Edge band radius")->capture_default_str()->check(CLI::PositiveNumber);
  refine_cmd->add_option("--mask-threshold", ra.mask_threshold, "Mask binarization level")->capture_default_str()->check(CLI::Range(0, 255));
  refine_cmd->callback([&] {
    if (ra.boundary.empty() && !ra.ground_truth_edge) throw CLI::ValidationError("one of --boundary or --ground-truth-edge is required");
    action = [&](std::ostream& o) { return do_refine(ra, o); };
  });

  AttackArgs aa;
  auto* attack_cmd = app.add_subcommand("attack", "JPEG-quantization or downscaling attack");
  attack_cmd->add_option("--image", aa.image, "Input image")->required();
  attack_cmd->add_option("--out", aa.out, "Output image")->required();
  attack_cmd->add_option("--kind", aa.kind, "jpeg|scale")->required()->check(CLI::IsMember({"jpeg", "scale"}));
  attack_cmd->add_option("--quality", aa.quality, "JPEG quality 1-100");
  attack_cmd->add_option("--ratio", aa.ratio, "Scale ratio in (0,1]");
  attack_cmd->add_option("--mask", aa.mask, "Optional mask to carry through the attack");
  attack_cmd->add_option("--mask-out", aa.mask_out, "Output for the attacked mask");
  attack_cmd->callback([&] { action = [&](std::ostream& o) { return do_attack(aa, o); }; });

  EdgeArgs ea;
  auto* edge_cmd = app.add_subcommand("edge-mask", "Boundary band of a mask (dilation minus erosion)");
  edge_cmd->add_option("--mask", ea.mask, "Input mask")->required();
  edge_cmd->add_option("--radius", ea.radius, "Structuring element radius")->capture_default_str()->check(CLI::PositiveNumber);
  edge_cmd->add_option("--out", ea.out, "Output mask")->required();
  edge_cmd->callback([&] { action = [&](std::ostream& o) { return do_edge(ea, o); }; });

  PostprocessArgs pa;
  auto* post_cmd = app.add_subcommand("postprocess", "Remove small connected components from a mask");
  post_cmd->add_option("--mask", pa.mask, "Input mask")->required();
  post_cmd->add_option("--out", pa.out, "Output mask")->required();
  post_cmd->add_option("--min-area", pa.min_area, "Minimum dilated component area")->capture_default_str();
  post_cmd->add_option("--dilate-radius", pa.dilate_radius, "Dilation before labelling (0 disables)")->capture_default_str()->check(CLI::NonNegativeNumber);
  post_cmd->callback([&] { action = [&](std::ostream& o) { return do_postprocess(pa, o); }; });

  EvalArgs va;
  auto* eval_cmd = app.add_subcommand("eval", "Pixel F1/MCC under the optimal-threshold protocol");
  eval_cmd->add_option("--manifest", va.manifest, "JSON-lines of prediction/ground-truth pairs")->required();
  eval_cmd->add_option("--metric", va.metric, "f1|mcc")->capture_default_str()->check(CLI::IsMember({"f1", "mcc"}));
  eval_cmd->add_option("--mode", va.mode, "per-image|global")->capture_default_str()->check(CLI::IsMember({"per-image", "global"}));
  eval_cmd->add_flag("--json", va.json, "Print the report as JSON");
  eval_cmd->callback([&] { action = [&](std::ostream& o) { return do_eval(va, o); }; });

  PipelineArgs la;
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run a synthesis manifest end to end");
  pipe_cmd->add_option("--manifest", la.manifest, "JSON-lines synthesis manifest")->required();
  pipe_cmd->add_option("--jobs", la.jobs, "Parallel entries (0 = hardware threads)")->capture_default_str();
  pipe_cmd->add_flag("--json", la.json, "Print provenance records as JSON");
  pipe_cmd->callback([&] { action = [&](std::ostream& o) { return do_pipeline(la, o); }; });

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("forge");

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    CLI::App* shown = &app;
    for (CLI::App* sub : app.get_subcommands()) shown = sub;
    out << shown->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "forge: " << e.what() << "\n\n";
    CLI::App* shown = &app;
    for (CLI::App* sub : app.get_subcommands()) shown = sub;
    err << shown->help();
    return kExitUsage;
  }

  if (!log_level.empty()) log::init(log::parse_level(log_level));

  try {
    return action(out);
  } catch (const UsageError& e) {
    err << "forge: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log::error("{}", e.what());
    return kExitFailure;
  }
}

}  // namespace forge::cli
