// dfmcam: generate, train, eval, explain, render, selftest.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "dfmcam/binary_io.hpp"
#include "dfmcam/checkpoint.hpp"
#include "dfmcam/dataset.hpp"
#include "dfmcam/error.hpp"
#include "dfmcam/gradcam.hpp"
#include "dfmcam/parallel.hpp"
#include "dfmcam/part_io.hpp"
#include "dfmcam/renderer.hpp"
#include "dfmcam/selftest.hpp"
#include "dfmcam/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfmcam;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kValidation = 2, kIo = 3 };

void report_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct RenderOptions {
  int width = 256;
  int height = 256;
  double step = 0.5;
  double w_occ = 0.15;
  double w_sal = 1.0;
  double fov = 45.0;
  std::string colormap;  // empty: heat with saliency, grey without
};

void add_render_options(CLI::App* cmd, RenderOptions& o) {
  cmd->add_option("--width", o.width, "Image width in pixels")->check(CLI::PositiveNumber);
  cmd->add_option("--height", o.height, "Image height in pixels")->check(CLI::PositiveNumber);
  cmd->add_option("--step", o.step, "Ray sampling interval in voxels")->check(CLI::PositiveNumber);
  cmd->add_option("--w-occ", o.w_occ, "Occupancy weight in the composite");
  cmd->add_option("--w-sal", o.w_sal, "Saliency weight in the composite");
  cmd->add_option("--fov", o.fov, "Vertical field of view, degrees");
  cmd->add_option("--colormap", o.colormap, "heat or grey");
}

// Saliency is scaled to a unit peak so the weights compare like with like.
RenderJob make_job(const VoxelTensor& volume, const ScalarGrid* saliency, const RenderOptions& o,
                   const std::string& view) {
  RenderJob job;
  job.occupancy = channel_grid(volume, 0);
  if (saliency) {
    job.saliency = *saliency;
    const double peak = *std::max_element(job.saliency.values.begin(), job.saliency.values.end());
    if (peak > 0.0)
      for (double& v : job.saliency.values) v /= peak;
  }
  job.occupancy_weight = o.w_occ;
  job.saliency_weight = o.w_sal;
  job.width = o.width;
  job.height = o.height;
  job.step = o.step;
  job.colormap = o.colormap.empty() ? (saliency ? Colormap::Heat : Colormap::Grey) : colormap_from_string(o.colormap);
  job.camera = camera_preset(view, job.occupancy.dims, o.fov);
  return job;
}

std::string view_file_name(const std::string& view) {
  std::string s = view;
  for (char& c : s) {
    if (c == '+') c = 'p';
    if (c == '-') c = 'n';
  }
  return "view_" + s + ".ppm";
}

// Input tensor for one sample with the channels the network reads.
Tensor<float> network_input(const VoxelTensor& t, const NetworkSpec& spec) {
  const int s = spec.input_size;
  if (t.depth() != s || t.height() != s || t.width() != s)
    throw ShapeError("input grid " + std::to_string(t.depth()) + "x" + std::to_string(t.height()) + "x" +
                     std::to_string(t.width()) + " does not match network input side " + std::to_string(s));
  Tensor<float> x({1, static_cast<int>(spec.input_channels.size()), s, s, s});
  gather_channels(t.data.data(), t.channels(), s, spec.input_channels, x, 0);
  return x;
}

int run_generate(const fs::path& out, const std::string& gen_config, std::optional<std::uint64_t> seed,
                 std::optional<int> train_n, std::optional<int> val_n, std::optional<int> test_n,
                 std::optional<int> resolution, std::optional<int> padding, std::optional<int> holes_min,
                 std::optional<int> holes_max, std::optional<double> near_fraction) {
  GeneratorConfig cfg;
  if (!gen_config.empty()) cfg = config_from_json(binio::read_file(gen_config));
  if (seed) cfg.seed = *seed;
  if (train_n) cfg.train_count = *train_n;
  if (val_n) cfg.val_count = *val_n;
  if (test_n) cfg.test_count = *test_n;
  if (resolution) cfg.resolution = *resolution;
  if (padding) cfg.padding = *padding;
  if (holes_min) cfg.holes_min = *holes_min;
  if (holes_max) cfg.holes_max = *holes_max;
  if (near_fraction) cfg.near_boundary_fraction = *near_fraction;
  const DatasetManifest m = generate(cfg, out);
  std::size_t manuf = 0;
  for (const auto& r : m.samples) manuf += r.label == Manufacturability::Manufacturable;
  std::cout << json{{"dataset", out.string()},
                    {"samples", m.samples.size()},
                    {"manufacturable", manuf},
                    {"voxel_size", m.grid.voxel_size()}}
                   .dump()
            << '\n';
  return kOk;
}

int run_train(const fs::path& data, const std::string& preset, const fs::path& out, TrainConfig cfg,
              const PresetOptions& popt) {
  const DatasetManifest m = load_manifest(data);
  PresetOptions opt = popt;
  opt.input_size = m.grid.padded_size();
  const NetworkSpec spec = make_preset(preset, opt);
  const SampleSet train_set = load_split(data, m, Split::Train);
  const SampleSet val_set = load_split(data, m, Split::Val);
  std::cerr << "training " << preset << " on " << train_set.size() << " samples, " << val_set.size()
            << " validation\n";
  const TrainResult r = train(spec, train_set, val_set, cfg, [](const EpochMetrics& e) {
    std::cerr << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.val_loss
              << " val_accuracy " << e.val_accuracy << " (" << e.seconds << " s)\n";
  });
  CheckpointMeta meta;
  meta.grid = m.grid;
  meta.seed = cfg.seed;
  meta.epoch = r.best_epoch;
  meta.val_loss = r.best_val_loss;
  save_checkpoint(out, r.best, meta);
  std::cout << json{{"checkpoint", out.string()},
                    {"best_epoch", r.best_epoch},
                    {"best_val_loss", r.best_val_loss},
                    {"epochs_run", r.history.size()},
                    {"early_stopped", r.early_stopped}}
                   .dump()
            << '\n';
  return kOk;
}

int run_eval(const fs::path& data, const fs::path& ckpt_path, const std::string& split_name,
             const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const DatasetManifest m = load_manifest(data);
  const Split split = split_from_string(split_name);
  const SampleSet set = load_split(data, m, split);
  const Evaluation ev = evaluate(ck.network, set);
  const json j{{"split", split_name},
               {"preset", ck.network.spec().name},
               {"n", ev.counts.total()},
               {"true_positive", ev.counts.tp},
               {"true_negative", ev.counts.tn},
               {"false_positive", ev.counts.fp},
               {"false_negative", ev.counts.fn},
               {"accuracy", ev.counts.accuracy()},
               {"mean_loss", ev.mean_loss}};
  if (!out.empty()) binio::write_file(out, j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return kOk;
}

int run_explain(const fs::path& ckpt_path, const std::string& part_path, const std::string& tensor_path,
                const std::string& class_name, const fs::path& out_dir, const std::string& views,
                const RenderOptions& ro) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  VoxelTensor volume;
  if (!part_path.empty()) {
    if (!ck.meta.grid) throw ValidationError("checkpoint carries no grid; pass a voxel tensor instead");
    volume = voxelize(load_part(part_path), *ck.meta.grid);
  } else {
    volume = load_tensor(tensor_path);
  }
  const Manufacturability target = manufacturability_from_string(class_name);
  const Tensor<float> x = network_input(volume, ck.network.spec());
  const SaliencyMap map = explain(ck.network, x, target);

  fs::create_directories(out_dir);
  save_tensor(out_dir / "saliency.vox", saliency_tensor(map, volume.voxel_size, volume.part_id));
  binio::write_file(out_dir / "saliency.json", saliency_sidecar(map) + "\n");
  json images = json::array();
  for (const std::string& view : split_list(views)) {
    const fs::path file = out_dir / view_file_name(view);
    write_ppm(file, render(make_job(volume, &map.upsampled, ro, view)));
    images.push_back(file.string());
  }
  const json summary{{"part_id", volume.part_id},
                     {"class", class_name},
                     {"class_score", map.class_score},
                     {"probability_manufacturable", map.probability},
                     {"predicted_label", std::string(to_string(map.probability >= 0.5
                                                                   ? Manufacturability::Manufacturable
                                                                   : Manufacturability::NonManufacturable))},
                     {"saliency", (out_dir / "saliency.vox").string()},
                     {"images", images}};
  binio::write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << '\n';
  return kOk;
}

int run_render(const std::string& tensor_path, const std::string& saliency_path, const std::string& view,
               const fs::path& out, const RenderOptions& ro) {
  const VoxelTensor volume = load_tensor(tensor_path);
  std::optional<ScalarGrid> sal;
  if (!saliency_path.empty()) sal = channel_grid(load_tensor(saliency_path), 0);
  write_ppm(out, render(make_job(volume, sal ? &*sal : nullptr, ro, view)));
  std::cout << json{{"image", out.string()}}.dump() << '\n';
  return kOk;
}

int run_selftest_cmd(const std::string& checkpoint) {
  const auto results = run_selftest(checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint));
  bool all = true;
  for (const CheckResult& r : results) {
    all = all && r.passed;
    std::fprintf(stderr, "%-22s %s  %8.3f s%s%s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds,
                 r.detail.empty() ? "" : "  ", r.detail.c_str());
  }
  json j = json::array();
  for (const CheckResult& r : results)
    j.push_back({{"check", r.name}, {"passed", r.passed}, {"seconds", r.seconds}, {"detail", r.detail}});
  std::cout << j.dump() << '\n';
  return all ? kOk : kInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drilled-hole manufacturability classifier with 3D Grad-CAM explanations"};
  app.set_config("--config", "", "TOML/INI file; [subcommand] sections hold subcommand options, flags win");
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a labelled corpus");
  fs::path gen_out;
  std::string gen_config;
  std::optional<std::uint64_t> gen_seed;
  std::optional<int> gen_train, gen_val, gen_test, gen_res, gen_pad, gen_hmin, gen_hmax;
  std::optional<double> gen_near;
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--generator-config", gen_config, "JSON generator configuration");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--train", gen_train, "Training samples");
  gen->add_option("--val", gen_val, "Validation samples");
  gen->add_option("--test", gen_test, "Test samples");
  gen->add_option("--resolution", gen_res, "Interior grid resolution R");
  gen->add_option("--padding", gen_pad, "Zero padding P per side");
  gen->add_option("--holes-min", gen_hmin, "Fewest holes per part");
  gen->add_option("--holes-max", gen_hmax, "Most holes per part");
  gen->add_option("--near-fraction", gen_near, "Fraction of samples near a rule threshold");

  // train
  auto* tr = app.add_subcommand("train", "Train a network preset on a corpus");
  fs::path tr_data, tr_out;
  std::string tr_preset = "normals-632";
  TrainConfig tcfg;
  std::string tr_metrics;
  PresetOptions popt;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Checkpoint file")->required();
  tr->add_option("--preset", tr_preset, "inouts-842 or normals-632");
  tr->add_option("--metrics", tr_metrics, "Per-epoch metrics, one JSON object per line");
  tr->add_option("--seed", tcfg.seed, "Initialisation and shuffling seed");
  tr->add_option("--batch-size", tcfg.batch_size, "Mini-batch size");
  tr->add_option("--max-epochs", tcfg.max_epochs, "Epoch cap");
  tr->add_option("--patience", tcfg.patience, "Epochs without improvement before stopping");
  tr->add_option("--min-delta", tcfg.min_delta, "Smallest validation loss decrease counted as improvement");
  tr->add_option("--max-seconds", tcfg.max_seconds, "Wall-clock budget (0 = none)");
  tr->add_option("--rho", tcfg.optimizer.rho, "ADADELTA decay");
  tr->add_option("--epsilon", tcfg.optimizer.epsilon, "ADADELTA epsilon");
  tr->add_option("--learning-rate", tcfg.optimizer.learning_rate, "Scale applied to each ADADELTA step");
  tr->add_option("--channels", popt.channels, "Output channels of the three conv layers")->expected(3);
  tr->add_option("--dense-width", popt.dense_width, "Width of the hidden dense layer");

  // eval
  auto* ev = app.add_subcommand("eval", "Confusion counts and accuracy on a split");
  fs::path ev_data, ev_ckpt;
  std::string ev_split = "test", ev_out;
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--out", ev_out, "Also write the record to this file");

  // explain
  auto* ex = app.add_subcommand("explain", "Grad-CAM saliency and renderings for one part");
  fs::path ex_ckpt, ex_out;
  std::string ex_part, ex_tensor, ex_class = "non_manufacturable", ex_views = "+z,iso";
  RenderOptions ex_ro;
  ex->add_option("--checkpoint", ex_ckpt, "Checkpoint file")->required();
  auto* ex_part_opt = ex->add_option("--part", ex_part, "Part record (JSON)");
  auto* ex_tensor_opt = ex->add_option("--tensor", ex_tensor, "Voxel tensor");
  ex_part_opt->excludes(ex_tensor_opt);
  ex->add_option("--class", ex_class, "non_manufacturable or manufacturable");
  ex->add_option("--out", ex_out, "Output directory")->required();
  ex->add_option("--views", ex_views, "Comma-separated camera presets: +x -x +y -y +z -z iso");
  add_render_options(ex, ex_ro);

  // render
  auto* rd = app.add_subcommand("render", "Ray-march a voxel tensor, optionally with a saliency overlay");
  std::string rd_tensor, rd_sal, rd_view = "iso";
  fs::path rd_out;
  RenderOptions rd_ro;
  rd->add_option("--tensor", rd_tensor, "Voxel tensor (channel 0 is rendered)")->required();
  rd->add_option("--saliency", rd_sal, "Saliency tensor of the same grid");
  rd->add_option("--view", rd_view, "Camera preset");
  rd->add_option("--out", rd_out, "PPM file")->required();
  add_render_options(rd, rd_ro);

  // selftest
  auto* st = app.add_subcommand("selftest", "Built-in numerical checks");
  std::string st_ckpt;
  st->add_option("--checkpoint", st_ckpt, "Also verify this checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("validation", e.what());
    return kValidation;
  }

  try {
    set_thread_count(threads);
    if (*gen)
      return run_generate(gen_out, gen_config, gen_seed, gen_train, gen_val, gen_test, gen_res, gen_pad, gen_hmin,
                          gen_hmax, gen_near);
    if (*tr) {
      tcfg.metrics_path = tr_metrics;
      return run_train(tr_data, tr_preset, tr_out, tcfg, popt);
    }
    if (*ev) return run_eval(ev_data, ev_ckpt, ev_split, ev_out);
    if (*ex) {
      if (ex_part.empty() && ex_tensor.empty()) throw ValidationError("explain needs --part or --tensor");
      return run_explain(ex_ckpt, ex_part, ex_tensor, ex_class, ex_out, ex_views, ex_ro);
    }
    if (*rd) return run_render(rd_tensor, rd_sal, rd_view, rd_out, rd_ro);
    if (*st) return run_selftest_cmd(st_ckpt);
  } catch (const ValidationError& e) {
    report_error(dynamic_cast<const ShapeError*>(&e) ? "shape" : "validation", e.what());
    return kValidation;
  } catch (const IoError& e) {
    report_error("io", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error("io", e.what());
    return kIo;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return kInternal;
  }
  return kInternal;
}
