// scanscribe command-line tool.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
// Failures print a single "error: <kind>: <message>" line on stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "scanscribe/dataset_io.hpp"
#include "scanscribe/fov_solver.hpp"
#include "scanscribe/render.hpp"
#include "scanscribe/training.hpp"
#include "scanscribe/version.hpp"

namespace ss = scanscribe;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ss::usage_error("bad number '" + s + "' in " + what);
  }
}

// "top,bottom,left,right"
ss::Box parse_box(const std::string& s, const std::string& what) {
  const auto parts = split(s, ',');
  if (parts.size() != 4) throw ss::usage_error(what + " must be top,bottom,left,right");
  const ss::Box b{parse_number(parts[0], what), parse_number(parts[1], what),
                  parse_number(parts[2], what), parse_number(parts[3], what)};
  if (!b.valid()) throw ss::usage_error(what + " is not a valid box (top <= bottom, left <= right)");
  return b;
}

json tool_block() { return {{"name", ss::kToolName}, {"version", ss::kVersion}}; }

json with_provenance(json body, const json& config) {
  body["tool"] = tool_block();
  body["config"] = config;
  return body;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  ss::write_text_file(path, j.dump(2) + "\n");
}

json verdicts_json(const ss::OracleVerdicts& v) {
  return {{"contains_roi", v.contains_roi},
          {"roi_alias_free", v.roi_alias_free},
          {"is_minimal", v.is_minimal},
          {"all", v.all()}};
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("SCANSCRIBE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ss::usage_error(std::string("SCANSCRIBE_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

// Applies `--config FILE` by appending every key not already given on the
// command line as a flag. Keys may sit at the top level or under an object
// named after the subcommand.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  if (args.size() < 2) return args;
  const std::string sub = args[1];
  std::string config_path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  if (config_path.empty()) return args;
  json cfg = ss::read_json_file(config_path, "bad config file");
  if (!cfg.is_object()) throw ss::usage_error("config file must hold a JSON object");
  if (cfg.contains(sub) && cfg[sub].is_object()) cfg = cfg[sub];
  auto given = [&](const std::string& flag) {
    for (std::size_t i = 2; i < args.size(); ++i) {
      if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_object()) continue;  // sections for other subcommands
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    auto scalar = [&](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        extra.push_back(flag);
        extra.push_back(scalar(v));
      }
    } else {
      extra.push_back(flag);
      extra.push_back(scalar(value));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

struct StackRef {
  std::string data;
  std::string stack;
};

void add_stack_options(CLI::App* app, StackRef& ref) {
  app->add_option("--data", ref.data, "Dataset directory")->required();
  app->add_option("--stack", ref.stack, "Stack id from the dataset manifest")->required();
}

const ss::DatasetRecord& find_stack(const ss::Dataset& ds, const std::string& id) {
  for (const auto& r : ds.records)
    if (r.id == id) return r;
  throw ss::data_error("missing stack '" + id + "'");
}

struct ModelPaths {
  std::string arch = "attention";
  std::string lr_weights;
  std::string tb_weights;
};

struct LoadedPair {
  ss::RoiRegressor<float> lr;
  ss::RoiRegressor<float> tb;
};

LoadedPair load_pair(const std::string& arch, const std::string& lr_path, const std::string& tb_path) {
  const auto kind = ss::architecture_from_string(arch);
  return {ss::load_model<float>(lr_path, kind, ss::BoundaryPair::left_right),
          ss::load_model<float>(tb_path, kind, ss::BoundaryPair::top_bottom)};
}

json box_or_null(const std::optional<ss::OracleVerdicts>& v) {
  return v ? verdicts_json(*v) : json(nullptr);
}

// ---------------------------------------------------------------- gen-data

struct GenDataOptions {
  std::string out;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  std::size_t size = 64;
  std::size_t max_slices = 8;
  std::size_t min_slices = 1;
  double margin = 3.0;

  json to_json() const {
    return {{"out", out},           {"count", count},           {"seed", seed},
            {"size", size},         {"max-slices", max_slices}, {"min-slices", min_slices},
            {"margin", margin}};
  }
};

int run_gen_data(const GenDataOptions& o) {
  if (o.count < 1) throw ss::usage_error("--count must be >= 1");
  ss::PhantomSpec spec;
  spec.size = o.size;
  spec.max_slices = o.max_slices;
  spec.min_slices = o.min_slices;
  spec.roi_margin = o.margin;
  spec.seed = o.seed;
  const auto records = ss::generate_dataset(spec, o.count);
  ss::save_dataset(o.out, records, with_provenance(json::object(), o.to_json()));
  std::cout << "wrote " << records.size() << " stacks to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string arch = "attention";
  std::string pair = "tb";
  std::string out;
  std::size_t epochs = 20;
  std::size_t max_steps = 0;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double final_lr_fraction = 0.05;
  std::uint64_t seed = 0;
  bool no_augment = false;

  json to_json() const {
    return {{"data", data},
            {"arch", arch},
            {"pair", pair},
            {"out", out},
            {"epochs", epochs},
            {"max-steps", max_steps},
            {"batch-size", batch_size},
            {"lr", lr},
            {"final-lr-fraction", final_lr_fraction},
            {"seed", seed},
            {"no-augment", no_augment}};
  }
};

int run_train(const TrainOptions& o) {
  const auto ds = ss::load_dataset(o.data);
  const auto train_set = ds.split(ss::Split::train);
  const auto val_set = ds.split(ss::Split::val);
  if (train_set.empty()) throw ss::data_error("empty training split in " + o.data);

  ss::ArchitectureConfig arch;
  arch.kind = ss::architecture_from_string(o.arch);
  arch.height = std::uint32_t(train_set.front()->stack.height());
  arch.width = std::uint32_t(train_set.front()->stack.width());
  std::size_t max_slices = 1;
  for (const auto& r : ds.records) max_slices = std::max(max_slices, r.stack.size());
  if (ds.manifest.contains("config") && ds.manifest["config"].contains("max-slices")) {
    max_slices = std::max(max_slices, ds.manifest["config"]["max-slices"].get<std::size_t>());
  }
  arch.max_slices = std::uint32_t(max_slices);

  ss::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.max_steps = o.max_steps;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.lr;
  cfg.final_lr_fraction = o.final_lr_fraction;
  cfg.augment = !o.no_augment;
  cfg.seed = o.seed;

  const auto pair = ss::boundary_pair_from_string(o.pair);
  const auto result = ss::train<float>(arch, pair, train_set, val_set, cfg, [](const ss::EpochReport& r) {
    std::cerr << "epoch " << r.epoch << " steps " << r.steps << " train_loss " << r.train_loss
              << " val_loss " << r.val_loss << "\n";
  });

  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ss::save_model(out.string(), result.weights);
  {
    std::ofstream csv(out.string() + ".loss.csv", std::ios::trunc);
    if (!csv) throw ss::data_error("cannot write " + out.string() + ".loss.csv");
    csv << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, result.loss_history[i]);
      csv << buf;
    }
  }
  json epochs = json::array();
  for (const auto& e : result.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"train_loss", e.train_loss},
                      {"val_loss", std::isfinite(e.val_loss) ? json(e.val_loss) : json(nullptr)}});
  }
  write_json(out.string() + ".json",
             with_provenance({{"weights", out.string()},
                              {"architecture", ss::to_string(arch.kind)},
                              {"pair", ss::to_string(pair)},
                              {"parameters", ss::instantiate<float>(result.weights).parameter_count()},
                              {"best_epoch", result.best_epoch},
                              {"shift_attempts", result.shift_attempts},
                              {"shift_rejections", result.shift_rejections},
                              {"epochs", epochs}},
                             o.to_json()));
  std::cout << "wrote " << out.string() << " (best epoch " << result.best_epoch << ")\n";
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictOptions {
  StackRef ref;
  ModelPaths model;
  std::string out;

  json to_json() const {
    return {{"data", ref.data},       {"stack", ref.stack},
            {"arch", model.arch},     {"lr-weights", model.lr_weights},
            {"tb-weights", model.tb_weights}, {"out", out}};
  }
};

int run_predict(const PredictOptions& o) {
  const auto ds = ss::load_dataset(o.ref.data);
  const auto& rec = find_stack(ds, o.ref.stack);
  auto models = load_pair(o.model.arch, o.model.lr_weights, o.model.tb_weights);
  const auto p = ss::predict_roi(rec.stack, models.lr, models.tb);
  json body{{"stack", rec.id},
            {"box", ss::box_to_json(p.box)},
            {"raw", {{"top_bottom", p.raw_top_bottom}, {"left_right", p.raw_left_right}}},
            {"swapped", {{"top_bottom", p.swapped_top_bottom}, {"left_right", p.swapped_left_right}}}};
  if (!models.lr.last_attention().empty()) {
    body["attention"] = {{"left_right", models.lr.last_attention().front()},
                         {"top_bottom", models.tb.last_attention().front()}};
  }
  const auto doc = with_provenance(body, o.to_json());
  if (o.out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    write_json(o.out, doc);
    std::cout << "roi " << p.box << " -> " << o.out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- prescribe

struct PrescribeOptions {
  StackRef ref;
  std::string roi;
  ModelPaths model;
  std::string threshold_mode = "relative";
  double threshold = 0.05;
  std::string out;

  json to_json() const {
    return {{"data", ref.data},
            {"stack", ref.stack},
            {"roi", roi},
            {"arch", model.arch},
            {"lr-weights", model.lr_weights},
            {"tb-weights", model.tb_weights},
            {"threshold-mode", threshold_mode},
            {"threshold", threshold},
            {"out", out}};
  }
};

int run_prescribe(const PrescribeOptions& o) {
  const auto policy = ss::threshold_policy(o.threshold_mode, o.threshold);
  const auto ds = ss::load_dataset(o.ref.data);
  const auto& rec = find_stack(ds, o.ref.stack);
  ss::Box roi;
  std::string roi_source;
  if (!o.roi.empty()) {
    roi = parse_box(o.roi, "--roi");
    roi_source = "given";
  } else {
    if (o.model.lr_weights.empty() || o.model.tb_weights.empty()) {
      throw ss::usage_error("prescribe needs --roi or both --lr-weights and --tb-weights");
    }
    auto models = load_pair(o.model.arch, o.model.lr_weights, o.model.tb_weights);
    roi = ss::predict_roi(rec.stack, models.lr, models.tb).box;
    roi_source = "predicted";
  }
  const auto report = ss::prescribe_stack(rec.stack, roi, policy);
  json slices = json::array();
  bool all_verified = true;
  for (const auto& s : report.slices) {
    if (s.skipped) {
      slices.push_back({{"slice", s.slice_index}, {"skipped", true}});
      continue;
    }
    all_verified = all_verified && s.verdicts && s.verdicts->all();
    slices.push_back({{"slice", s.slice_index},
                      {"skipped", false},
                      {"object_mask", ss::box_to_json(s.mask)},
                      {"fov", ss::box_to_json(s.fov)},
                      {"phase_width", s.minimal_width},
                      {"readout_width", s.readout_width},
                      {"alias_free", {s.alias_free.lo, s.alias_free.hi}},
                      {"verdicts", box_or_null(s.verdicts)}});
  }
  const auto doc = with_provenance({{"stack", rec.id},
                                    {"roi", ss::box_to_json(roi)},
                                    {"roi_source", roi_source},
                                    {"phase_axis", ss::to_string(report.phase_axis)},
                                    {"fov", ss::box_to_json(report.fov)},
                                    {"skipped_slices", report.skipped_count()},
                                    {"all_verdicts_true", all_verified},
                                    {"slices", slices}},
                                   o.to_json());
  if (o.out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    write_json(o.out, doc);
    std::cout << "fov " << report.fov << " -> " << o.out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::string data;
  std::string split = "test";
  std::vector<std::string> models;
  std::string t_test = "pooled";
  std::string out;

  json to_json() const {
    return {{"data", data}, {"split", split}, {"model", models}, {"t-test", t_test}, {"out", out}};
  }
};

struct ModelSpec {
  std::string name, kind, lr, tb;
};

// name=kind:lr.sswt,tb.sswt
ModelSpec parse_model_spec(const std::string& s) {
  const auto eq = s.find('=');
  const auto colon = s.find(':', eq == std::string::npos ? 0 : eq);
  if (eq == std::string::npos || colon == std::string::npos) {
    throw ss::usage_error("--model must be name=kind:lr_weights,tb_weights, got '" + s + "'");
  }
  const auto paths = split(s.substr(colon + 1), ',');
  if (paths.size() != 2) throw ss::usage_error("--model needs two weight paths, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1, colon - eq - 1), paths[0], paths[1]};
}

int run_evaluate(const EvaluateOptions& o) {
  if (o.models.empty()) throw ss::usage_error("evaluate needs at least one --model");
  const auto variant = ss::t_test_variant_from_string(o.t_test);
  const auto ds = ss::load_dataset(o.data);
  const auto records = ds.split(ss::split_from_string(o.split));
  if (records.empty()) throw ss::data_error("empty evaluation split '" + o.split + "'");

  std::vector<std::pair<ModelSpec, ss::MetricsTable>> results;
  json models = json::object();
  for (const auto& text : o.models) {
    const auto spec = parse_model_spec(text);
    auto pair = load_pair(spec.kind, spec.lr, spec.tb);
    auto table = ss::evaluate(pair.lr, pair.tb, records);
    const std::string csv = o.out + "_" + spec.name + ".csv";
    {
      const fs::path p(csv);
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      std::ofstream f(csv, std::ios::trunc);
      if (!f) throw ss::data_error("cannot write " + csv);
      table.write_csv(f);
    }
    const auto iou = table.iou_summary();
    const auto err = table.boundary_error_summary();
    models[spec.name] = {{"architecture", spec.kind},
                         {"cases", table.cases.size()},
                         {"iou", {{"mean", iou.mean}, {"std", iou.std}}},
                         {"boundary_error", {{"mean", err.mean}, {"std", err.std}}},
                         {"csv", csv}};
    std::printf("%-12s n=%zu iou %.6f +- %.6f  boundary_error %.6f +- %.6f\n", spec.name.c_str(),
                table.cases.size(), iou.mean, iou.std, err.mean, err.std);
    results.emplace_back(spec, std::move(table));
  }
  json tests = json::array();
  for (std::size_t i = 1; i < results.size(); ++i) {
    const auto& [a, ta] = results.front();
    const auto& [b, tb] = results[i];
    for (const auto* metric : {"iou", "boundary_error"}) {
      const bool is_iou = std::string(metric) == "iou";
      const auto r = ss::t_test(is_iou ? ta.ious() : ta.boundary_errors(),
                                is_iou ? tb.ious() : tb.boundary_errors(), variant);
      tests.push_back({{"a", a.name}, {"b", b.name}, {"metric", metric}, {"t", r.t}, {"df", r.df}, {"p", r.p}});
      std::printf("t-test %s vs %s (%s): t=%.6f df=%.6f p=%.6f\n", a.name.c_str(), b.name.c_str(),
                  metric, r.t, r.df, r.p);
    }
  }
  write_json(o.out + ".json", with_provenance({{"split", o.split},
                                               {"t_test_variant", o.t_test},
                                               {"models", models},
                                               {"t_tests", tests}},
                                              o.to_json()));
  return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyOptions {
  std::string input;
  std::string object, roi, fov;
  std::string phase_axis = "rows";
  std::string out;

  json to_json() const {
    return {{"input", input}, {"object", object},         {"roi", roi},
            {"fov", fov},     {"phase-axis", phase_axis}, {"out", out}};
  }
};

int run_verify(const VerifyOptions& o) {
  ss::Box object, roi, fov;
  ss::Axis axis = ss::axis_from_string(o.phase_axis);
  if (!o.input.empty()) {
    const auto j = ss::read_json_file(o.input, "bad verify input");
    try {
      object = ss::box_from_json(j.at("object"));
      roi = ss::box_from_json(j.at("roi"));
      fov = ss::box_from_json(j.at("fov"));
      if (j.contains("phase_axis")) axis = ss::axis_from_string(j.at("phase_axis").get<std::string>());
    } catch (const json::exception& e) {
      throw ss::data_error(std::string("bad verify input: ") + e.what());
    }
  } else {
    if (o.object.empty() || o.roi.empty() || o.fov.empty()) {
      throw ss::usage_error("verify needs --input or all of --object, --roi and --fov");
    }
    object = parse_box(o.object, "--object");
    roi = parse_box(o.roi, "--roi");
    fov = parse_box(o.fov, "--fov");
  }
  const auto v = ss::oracle_verdicts(object, roi, fov, axis);
  if (!v) throw ss::data_error("oracle requires integer grid (coordinates must be multiples of 1/8)");
  const auto doc = with_provenance({{"object", ss::box_to_json(object)},
                                    {"roi", ss::box_to_json(roi)},
                                    {"fov", ss::box_to_json(fov)},
                                    {"phase_axis", ss::to_string(axis)},
                                    {"verdicts", verdicts_json(*v)}},
                                   o.to_json());
  if (!o.out.empty()) write_json(o.out, doc);
  std::cout << verdicts_json(*v).dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- render

struct RenderOptions {
  StackRef ref;
  std::vector<std::string> boxes;
  std::string out;

  json to_json() const {
    return {{"data", ref.data}, {"stack", ref.stack}, {"boxes", boxes}, {"out", out}};
  }
};

// name=color:t,b,l,r
ss::OverlayBox parse_overlay(const std::string& s) {
  const auto eq = s.find('=');
  const auto colon = s.find(':', eq == std::string::npos ? 0 : eq);
  if (eq == std::string::npos || colon == std::string::npos) {
    throw ss::usage_error("--boxes must be name=color:top,bottom,left,right, got '" + s + "'");
  }
  return {s.substr(0, eq), ss::color_from_name(s.substr(eq + 1, colon - eq - 1)),
          parse_box(s.substr(colon + 1), "--boxes")};
}

int run_render(const RenderOptions& o) {
  std::vector<ss::OverlayBox> overlays;
  for (const auto& b : o.boxes) overlays.push_back(parse_overlay(b));
  const auto ds = ss::load_dataset(o.ref.data);
  const auto& rec = find_stack(ds, o.ref.stack);
  const fs::path prefix(o.out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  for (std::size_t k = 0; k < rec.stack.size(); ++k) {
    const auto path = o.out + "_" + std::to_string(k) + ".ppm";
    ss::write_ppm(path, ss::render_overlay(rec.stack[k], overlays));
    std::cout << path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localizer ROI prediction and alias-free FOV prescription"};
  app.set_version_flag("--version", std::string(ss::kToolName) + " " + ss::kVersion);
  app.require_subcommand(1);
  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file with default flag values");
  };

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of stacks");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed (default: $SCANSCRIBE_SEED or 0)");
  gen_cmd->add_option("--size", gen.size, "Image size in pixels (square)");
  gen_cmd->add_option("--max-slices", gen.max_slices, "Maximum slices per stack");
  gen_cmd->add_option("--min-slices", gen.min_slices, "Minimum slices per stack");
  gen_cmd->add_option("--margin", gen.margin, "ROI margin around the designated organs, pixels");
  add_config(gen_cmd);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train one regressor instance");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--arch", tr.arch, "stacked2d | conv3d | attention");
  train_cmd->add_option("--pair", tr.pair, "Boundary pair: lr | tb")->required();
  train_cmd->add_option("--out", tr.out, "Output weights file (.sswt)")->required();
  train_cmd->add_option("--epochs", tr.epochs, "Training epochs");
  train_cmd->add_option("--max-steps", tr.max_steps, "Stop after this many updates (0: off)");
  train_cmd->add_option("--batch-size", tr.batch_size, "Stacks per minibatch");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--final-lr-fraction", tr.final_lr_fraction, "Cosine decay floor");
  train_cmd->add_option("--seed", tr.seed, "Training seed (default: $SCANSCRIBE_SEED or 0)");
  train_cmd->add_flag("--no-augment", tr.no_augment, "Disable flip and shift augmentation");
  add_config(train_cmd);

  PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "Predict the ROI of one stack");
  add_stack_options(predict_cmd, pr.ref);
  predict_cmd->add_option("--arch", pr.model.arch, "stacked2d | conv3d | attention");
  predict_cmd->add_option("--lr-weights", pr.model.lr_weights, "Left-right instance")->required();
  predict_cmd->add_option("--tb-weights", pr.model.tb_weights, "Top-bottom instance")->required();
  predict_cmd->add_option("--out", pr.out, "Output JSON (default: stdout)");
  add_config(predict_cmd);

  PrescribeOptions ps;
  auto* prescribe_cmd = app.add_subcommand("prescribe", "Prescribe the smallest alias-free FOV");
  add_stack_options(prescribe_cmd, ps.ref);
  prescribe_cmd->add_option("--roi", ps.roi, "ROI as top,bottom,left,right (else predicted)");
  prescribe_cmd->add_option("--arch", ps.model.arch, "Architecture of the weights");
  prescribe_cmd->add_option("--lr-weights", ps.model.lr_weights, "Left-right instance");
  prescribe_cmd->add_option("--tb-weights", ps.model.tb_weights, "Top-bottom instance");
  prescribe_cmd->add_option("--threshold-mode", ps.threshold_mode, "relative | absolute");
  prescribe_cmd->add_option("--threshold", ps.threshold, "Object-mask threshold");
  prescribe_cmd->add_option("--out", ps.out, "Output JSON (default: stdout)");
  add_config(prescribe_cmd);

  EvaluateOptions ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score model pairs on a dataset split");
  evaluate_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  evaluate_cmd->add_option("--split", ev.split, "train | val | test");
  evaluate_cmd->add_option("--model", ev.models, "name=kind:lr.sswt,tb.sswt (repeatable)");
  evaluate_cmd->add_option("--t-test", ev.t_test, "pooled | welch");
  evaluate_cmd->add_option("--out", ev.out, "Output prefix for CSV and JSON")->required();
  add_config(evaluate_cmd);

  VerifyOptions vf;
  auto* verify_cmd = app.add_subcommand("verify", "Check an FOV against the aliasing oracle");
  verify_cmd->add_option("--input", vf.input, "JSON with object, roi, fov, phase_axis");
  verify_cmd->add_option("--object", vf.object, "Object box top,bottom,left,right");
  verify_cmd->add_option("--roi", vf.roi, "ROI box top,bottom,left,right");
  verify_cmd->add_option("--fov", vf.fov, "FOV box top,bottom,left,right");
  verify_cmd->add_option("--phase-axis", vf.phase_axis, "rows | columns");
  verify_cmd->add_option("--out", vf.out, "Also write the verdict manifest here");
  add_config(verify_cmd);

  RenderOptions rd;
  auto* render_cmd = app.add_subcommand("render", "Draw box outlines over each slice (PPM)");
  add_stack_options(render_cmd, rd.ref);
  render_cmd->add_option("--boxes", rd.boxes, "name=color:top,bottom,left,right (repeatable)");
  render_cmd->add_option("--out", rd.out, "Output prefix; writes PREFIX_<k>.ppm")->required();
  add_config(render_cmd);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(std::move(args));
    const std::uint64_t seed = default_seed();
    gen.seed = tr.seed = seed;
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));

    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*predict_cmd) return run_predict(pr);
    if (*prescribe_cmd) return run_prescribe(ps);
    if (*evaluate_cmd) return run_evaluate(ev);
    if (*verify_cmd) return run_verify(vf);
    if (*render_cmd) return run_render(rd);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const ss::Error& e) {
    const char* kind = e.kind() == ss::ErrorKind::usage ? "usage"
                       : e.kind() == ss::ErrorKind::data ? "data"
                                                         : "numeric";
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << kind << ": " << msg << "\n";
    return e.kind() == ss::ErrorKind::usage ? 2 : e.kind() == ss::ErrorKind::data ? 3 : 4;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: data: " << msg << "\n";
    return 3;
  }
}
