#include "parn/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "parn/io.hpp"
#include "parn/probes.hpp"
#include "parn/random.hpp"

namespace parn::cli {

using nlohmann::json;

namespace {

constexpr double kDefaultAlphaMax = 1099511627776.0;  // 2^40

// Reads a PARN1 tensor container (tensor "images") or an IDX image file,
// whichever the file's magic says it is.
DenseTensor load_images_any(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path);
  char magic[5] = {};
  probe.read(magic, 5);
  probe.close();
  if (std::string(magic, 5) == "PARN1") {
    for (auto& [name, tensor] : load_tensors(path)) {
      if (name == "images") return std::move(tensor);
    }
    throw FormatError("no 'images' tensor in " + path);
  }
  return load_idx_images(path);
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

struct DataOptions {
  std::string train_images, train_labels, test_images, test_labels;
  std::string synth;  // digits | two_moons | blobs
  Index synth_train = 2000;
  Index synth_test = 500;
  int synth_classes = 3;
  double synth_noise_std = 0.05;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--train-images", train_images, "IDX training images");
    cmd->add_option("--train-labels", train_labels, "IDX training labels");
    cmd->add_option("--test-images", test_images, "IDX test images");
    cmd->add_option("--test-labels", test_labels, "IDX test labels");
    cmd->add_option("--synth", synth,
                    "synthetic dataset instead of IDX files: digits, "
                    "two_moons or blobs");
    cmd->add_option("--synth-train", synth_train, "synthetic training size");
    cmd->add_option("--synth-test", synth_test, "synthetic test size");
    cmd->add_option("--synth-classes", synth_classes, "blob class count");
    cmd->add_option("--synth-noise-std", synth_noise_std,
                    "synthetic coordinate noise");
  }

  std::pair<LabeledDataset, LabeledDataset> load(std::uint64_t seed) const {
    if (!synth.empty()) {
      auto make = [&](Index n, std::uint64_t s) {
        if (synth == "digits") return synth_digits(n, s);
        if (synth == "two_moons") {
          return synth_2d(Synth2dKind::TwoMoons, 2, n, synth_noise_std, s);
        }
        if (synth == "blobs") {
          return synth_2d(Synth2dKind::GaussianBlobs, synth_classes, n,
                          synth_noise_std, s);
        }
        throw ValidationError("unknown synthetic dataset '" + synth + "'");
      };
      return {make(synth_train, mix_seed(seed, 0xDA7A)),
              make(synth_test, mix_seed(seed, 0xDA7B))};
    }
    if (train_images.empty() || train_labels.empty() || test_images.empty() ||
        test_labels.empty()) {
      throw ValidationError(
          "either --synth or all of --train-images/--train-labels/"
          "--test-images/--test-labels are required");
    }
    return {load_idx(train_images, train_labels),
            load_idx(test_images, test_labels)};
  }
};

struct TrainOptions {
  DataOptions data;
  std::string arch = "mlp";
  std::string hidden = "256";
  double init_scale = 1.0;
  std::string mode = "plain";
  double lambda = 1.0;
  int epochs = 100;
  Index batch_size = 128;
  std::string optimizer = "adam";
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::string lr_drops = "50,75,90";
  double lr_drop_factor = 10.0;
  double pgd_epsilon = 0.3;
  double pgd_step = 0.0075;
  int pgd_iters = 40;
  int pgd_restarts = 1;
  int crop_pad = 0;
  bool mirror = false;
  double noise_permuted = 0.5;
  double noise_sigma_min = 1.0;
  double noise_sigma_max = 2.5;
  std::uint64_t seed = 0;
  std::string model_out;
  std::string log_out;
};

struct EvalOptions {
  std::string model;
  std::string in_images;
  std::vector<std::string> out_sets;  // name=path
  Index gen_noise = 0;
  Index bins = 50;
  std::uint64_t seed = 0;
  std::string report;
  std::string csv_dir;
};

struct AttackOptions {
  std::string model;
  std::string inputs;
  std::string labels;
  std::string objective = "max-confidence";
  double epsilon = 0.3;
  double step = 0.0075;
  int iters = 200;
  int restarts = 5;
  bool no_clamp = false;
  std::uint64_t seed = 0;
  std::string out;
  std::string csv;
};

struct ProbeOptions {
  std::string model;
  Index directions = 10000;
  double target = 0.999;
  double alpha_max = kDefaultAlphaMax;
  double threshold = 0.95;
  std::uint64_t seed = 0;
  std::string out;
};

struct RegionsOptions {
  std::string model;
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  Index resolution = 200;
  std::string out;
};

struct NoiseOptions {
  Index count = 0;
  Index height = 28, width = 28;
  double permuted = 0.5;
  double sigma_min = 1.0, sigma_max = 2.5;
  std::string train_images;
  std::uint64_t seed = 0;
  std::string out;
  std::string pgm_dir;
  Index pgm_count = 16;
};

int run_train(const TrainOptions& o) {
  auto [train_set, test_set] = o.data.load(o.seed);

  ReluNetwork net;
  const std::uint64_t net_seed = mix_seed(o.seed, 0x11177);
  if (o.arch == "mlp") {
    const Index d = train_set.images.size() / train_set.count();
    std::vector<Index> widths;
    for (int h : parse_int_list(o.hidden)) widths.push_back(h);
    net = make_mlp({d}, widths, train_set.num_classes, net_seed, 0.0,
                   o.init_scale);
  } else if (o.arch == "cnn") {
    if (train_set.images.rank() != 3) {
      throw ValidationError("cnn needs [n,H,W] images");
    }
    net = make_small_cnn({1, train_set.images.dim(1), train_set.images.dim(2)},
                         train_set.num_classes, net_seed);
  } else {
    throw ValidationError("unknown architecture '" + o.arch + "'");
  }

  TrainConfig cfg;
  if (o.mode == "plain") {
    cfg.mode = TrainMode::Plain;
  } else if (o.mode == "ceda") {
    cfg.mode = TrainMode::Ceda;
  } else if (o.mode == "acet") {
    cfg.mode = TrainMode::Acet;
  } else {
    throw ValidationError("unknown mode '" + o.mode + "'");
  }
  cfg.lambda = o.lambda;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.optimizer.kind =
      o.optimizer == "sgd" ? OptimizerKind::SgdMomentum : OptimizerKind::Adam;
  cfg.optimizer.lr = o.lr;
  cfg.optimizer.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.lr_drop_epochs = parse_int_list(o.lr_drops);
  cfg.lr_drop_factor = o.lr_drop_factor;
  cfg.pgd.epsilon = o.pgd_epsilon;
  cfg.pgd.step_size = o.pgd_step;
  cfg.pgd.iterations = o.pgd_iters;
  cfg.pgd.restarts = o.pgd_restarts;
  cfg.seed = o.seed;
  cfg.augmentation.random_crop_pad = o.crop_pad;
  cfg.augmentation.mirror = o.mirror;
  cfg.noise.permuted_fraction = o.noise_permuted;
  cfg.noise.sigma_range = {o.noise_sigma_min, o.noise_sigma_max};

  const TrainLog log = train(net, train_set, test_set, cfg);
  save_checkpoint(net, o.model_out);
  if (!o.log_out.empty()) write_train_log_csv(log, o.log_out);
  const EpochRecord& last = log.back();
  std::cout << "trained " << o.mode << " model: test_err="
            << format_double(last.test_error)
            << " noise_mmc=" << format_double(last.noise_mmc) << "\n";
  return 0;
}

int run_eval(const EvalOptions& o) {
  const ReluNetwork net = load_checkpoint(o.model);
  const DenseTensor in_images = load_images_any(o.in_images);

  std::vector<std::pair<std::string, DenseTensor>> out_sets;
  for (const std::string& entry : o.out_sets) {
    const auto sep = entry.find('=');
    if (sep == std::string::npos) {
      throw ValidationError("--out-set expects name=path, got '" + entry + "'");
    }
    out_sets.emplace_back(entry.substr(0, sep),
                          load_images_any(entry.substr(sep + 1)));
  }
  if (o.gen_noise > 0) {
    NoiseConfig ncfg;
    ncfg.image_shape = {in_images.dim(in_images.rank() - 2),
                        in_images.dim(in_images.rank() - 1)};
    ncfg.seed = mix_seed(o.seed, 0x4e01);
    out_sets.emplace_back("noise",
                          generate_noise_batch(ncfg, &in_images, o.gen_noise));
  }

  const EvalReport report = evaluate_model(net, in_images, out_sets, o.bins);

  json j;
  j["mmc_in"] = report.mmc_in;
  j["out_datasets"] = json::array();
  for (const OutDatasetEval& e : report.out_datasets) {
    json je;
    je["name"] = e.name;
    je["mmc"] = e.mmc_out;
    je["auroc"] = e.auroc;
    je["fpr_at_95_tpr"] = e.fpr_at_95_tpr;
    j["out_datasets"].push_back(std::move(je));
  }
  const std::string text = j.dump(2) + "\n";
  if (o.report.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(o.report);
    if (!out) throw IoError("cannot write " + o.report);
    out << text;
  }
  if (!o.csv_dir.empty()) {
    write_histogram_csv(report.histogram_in, o.csv_dir + "/hist_in.csv");
    for (const OutDatasetEval& e : report.out_datasets) {
      write_roc_csv(e.roc, o.csv_dir + "/roc_" + e.name + ".csv");
      write_histogram_csv(e.histogram, o.csv_dir + "/hist_" + e.name + ".csv");
    }
  }
  return 0;
}

int run_attack(const AttackOptions& o) {
  const ReluNetwork net = load_checkpoint(o.model);
  const DenseTensor inputs = load_images_any(o.inputs);

  PgdConfig cfg;
  cfg.epsilon = o.epsilon;
  cfg.step_size = o.step;
  cfg.iterations = o.iters;
  cfg.restarts = o.restarts;
  cfg.clamp_box = !o.no_clamp;
  cfg.seed = o.seed;

  AttackResult result;
  if (o.objective == "max-confidence") {
    result = pgd_max_confidence(net, inputs, cfg);
  } else if (o.objective == "untargeted-ce") {
    if (o.labels.empty()) {
      throw ValidationError("--labels is required for untargeted-ce");
    }
    std::ifstream probe(o.labels);
    LabeledDataset with_labels = load_idx(o.inputs, o.labels);
    result = pgd_adversarial_sample(net, inputs, with_labels.labels, cfg);
  } else {
    throw ValidationError("unknown objective '" + o.objective + "'");
  }

  save_tensors({{"images", result.points}}, o.out);
  if (!o.csv.empty()) {
    std::ofstream csv(o.csv);
    if (!csv) throw IoError("cannot write " + o.csv);
    csv << "index,objective\n";
    for (Index i = 0; i < result.objectives.size(); ++i) {
      csv << i << ',' << format_double(result.objectives[i]) << '\n';
    }
  }
  std::cout << "attacked " << result.objectives.size() << " samples\n";
  return 0;
}

int run_probe(const ProbeOptions& o) {
  const ReluNetwork net = load_checkpoint(o.model);
  const AlphaProbeSummary summary = run_alpha_probe(
      net, o.directions, o.target, o.alpha_max, o.threshold, o.seed);
  json j;
  j["median_alpha"] = summary.median_alpha;
  j["success_rate"] = summary.success_rate;
  j["projected_overconf_fraction"] = summary.projected_overconf_fraction;
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(o.out);
    if (!out) throw IoError("cannot write " + o.out);
    out << text;
  }
  return 0;
}

int run_regions(const RegionsOptions& o) {
  const ReluNetwork net = load_checkpoint(o.model);
  const RegionRaster raster =
      enumerate_regions_2d(net, o.xmin, o.xmax, o.ymin, o.ymax, o.resolution);
  write_regions_csv(raster, o.out);
  std::cout << "regions=" << raster.region_count << "\n";
  return 0;
}

int run_noise(const NoiseOptions& o) {
  NoiseConfig cfg;
  cfg.permuted_fraction = o.permuted;
  cfg.sigma_range = {o.sigma_min, o.sigma_max};
  cfg.seed = o.seed;
  cfg.image_shape = {o.height, o.width};

  DenseTensor train_images;
  const DenseTensor* train_ptr = nullptr;
  if (!o.train_images.empty()) {
    train_images = load_images_any(o.train_images);
    train_ptr = &train_images;
  }
  const DenseTensor batch = generate_noise_batch(cfg, train_ptr, o.count);
  save_tensors({{"images", batch}}, o.out);
  if (!o.pgm_dir.empty()) {
    const Index previews = std::min(o.pgm_count, o.count);
    for (Index i = 0; i < previews; ++i) {
      DenseTensor img(Shape{o.height, o.width});
      img.array() = batch.array().segment(i * o.height * o.width,
                                          o.height * o.width);
      char name[32];
      std::snprintf(name, sizeof(name), "/noise_%03d.pgm", static_cast<int>(i));
      write_pgm(img, o.pgm_dir + name);
    }
  }
  std::cout << "wrote " << o.count << " noise samples to " << o.out << "\n";
  return 0;
}

// Values from a --config JSON file are appended after the user's flags so
// they win under the take-last policy.
std::vector<std::string> config_overrides(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("bad config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw FormatError("config must be a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : cfg.items()) {
    std::string text;
    if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ',';
        joined += v.dump();
      }
      text = joined;
    } else {
      text = value.dump();
    }
    tokens.push_back("--" + key + "=" + text);
  }
  return tokens;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"piecewise-affine network training, geometry and evaluation"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  TrainOptions train_o;
  EvalOptions eval_o;
  AttackOptions attack_o;
  ProbeOptions probe_o;
  RegionsOptions regions_o;
  NoiseOptions noise_o;
  std::string config_path;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_o.data.add_flags(train_cmd);
  train_cmd->add_option("--arch", train_o.arch, "mlp or cnn");
  train_cmd->add_option("--hidden", train_o.hidden, "mlp hidden widths (csv)");
  train_cmd->add_option("--init-scale", train_o.init_scale,
                        "He-init multiplier for mlp weights");
  train_cmd->add_option("--mode", train_o.mode, "plain, ceda or acet");
  train_cmd->add_option("--lambda", train_o.lambda, "confidence term weight");
  train_cmd->add_option("--epochs", train_o.epochs);
  train_cmd->add_option("--batch-size", train_o.batch_size);
  train_cmd->add_option("--optimizer", train_o.optimizer, "adam or sgd");
  train_cmd->add_option("--lr", train_o.lr);
  train_cmd->add_option("--momentum", train_o.momentum);
  train_cmd->add_option("--weight-decay", train_o.weight_decay);
  train_cmd->add_option("--lr-drops", train_o.lr_drops, "epochs (csv)");
  train_cmd->add_option("--lr-drop-factor", train_o.lr_drop_factor);
  train_cmd->add_option("--pgd-epsilon", train_o.pgd_epsilon);
  train_cmd->add_option("--pgd-step", train_o.pgd_step);
  train_cmd->add_option("--pgd-iters", train_o.pgd_iters);
  train_cmd->add_option("--pgd-restarts", train_o.pgd_restarts);
  train_cmd->add_option("--crop-pad", train_o.crop_pad);
  train_cmd->add_flag("--mirror", train_o.mirror);
  train_cmd->add_option("--noise-permuted-fraction", train_o.noise_permuted);
  train_cmd->add_option("--noise-sigma-min", train_o.noise_sigma_min);
  train_cmd->add_option("--noise-sigma-max", train_o.noise_sigma_max);
  train_cmd->add_option("--seed", train_o.seed);
  train_cmd->add_option("--model-out", train_o.model_out)->required();
  train_cmd->add_option("--log-out", train_o.log_out, "train log CSV");
  train_cmd->add_option("--config", config_path, "JSON overriding these flags");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a model");
  eval_cmd->add_option("--model", eval_o.model)->required();
  eval_cmd->add_option("--in-images", eval_o.in_images)->required();
  eval_cmd->add_option("--out-set", eval_o.out_sets, "name=path, repeatable")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  eval_cmd->add_option("--gen-noise", eval_o.gen_noise,
                       "add a generated noise out-set of this size");
  eval_cmd->add_option("--bins", eval_o.bins, "histogram bins");
  eval_cmd->add_option("--seed", eval_o.seed);
  eval_cmd->add_option("--report", eval_o.report, "JSON output (default stdout)");
  eval_cmd->add_option("--csv-dir", eval_o.csv_dir, "ROC/histogram CSV dir");
  eval_cmd->add_option("--config", config_path, "JSON overriding these flags");

  CLI::App* attack_cmd = app.add_subcommand("attack", "PGD attack on inputs");
  attack_cmd->add_option("--model", attack_o.model)->required();
  attack_cmd->add_option("--inputs", attack_o.inputs)->required();
  attack_cmd->add_option("--labels", attack_o.labels, "IDX labels (untargeted-ce)");
  attack_cmd->add_option("--objective", attack_o.objective,
                         "max-confidence or untargeted-ce");
  attack_cmd->add_option("--epsilon", attack_o.epsilon);
  attack_cmd->add_option("--step", attack_o.step);
  attack_cmd->add_option("--iters", attack_o.iters);
  attack_cmd->add_option("--restarts", attack_o.restarts);
  attack_cmd->add_flag("--no-clamp", attack_o.no_clamp, "skip [0,1] box clamp");
  attack_cmd->add_option("--seed", attack_o.seed);
  attack_cmd->add_option("--out", attack_o.out)->required();
  attack_cmd->add_option("--csv", attack_o.csv, "per-sample objective CSV");
  attack_cmd->add_option("--config", config_path, "JSON overriding these flags");

  CLI::App* probe_cmd =
      app.add_subcommand("probe-alpha", "input-scaling confidence probe");
  probe_cmd->add_option("--model", probe_o.model)->required();
  probe_cmd->add_option("--directions", probe_o.directions);
  probe_cmd->add_option("--target", probe_o.target, "target confidence");
  probe_cmd->add_option("--alpha-max", probe_o.alpha_max);
  probe_cmd->add_option("--threshold", probe_o.threshold,
                        "projected overconfidence threshold");
  probe_cmd->add_option("--seed", probe_o.seed);
  probe_cmd->add_option("--out", probe_o.out, "JSON output (default stdout)");
  probe_cmd->add_option("--config", config_path, "JSON overriding these flags");

  CLI::App* regions_cmd =
      app.add_subcommand("regions", "linear-region raster of a 2-d model");
  regions_cmd->add_option("--model", regions_o.model)->required();
  regions_cmd->add_option("--xmin", regions_o.xmin);
  regions_cmd->add_option("--xmax", regions_o.xmax);
  regions_cmd->add_option("--ymin", regions_o.ymin);
  regions_cmd->add_option("--ymax", regions_o.ymax);
  regions_cmd->add_option("--resolution", regions_o.resolution);
  regions_cmd->add_option("--out", regions_o.out)->required();
  regions_cmd->add_option("--config", config_path, "JSON overriding these flags");

  CLI::App* noise_cmd = app.add_subcommand("noise", "sample the out-distribution");
  noise_cmd->add_option("--count", noise_o.count)->required();
  noise_cmd->add_option("--height", noise_o.height);
  noise_cmd->add_option("--width", noise_o.width);
  noise_cmd->add_option("--permuted-fraction", noise_o.permuted);
  noise_cmd->add_option("--sigma-min", noise_o.sigma_min);
  noise_cmd->add_option("--sigma-max", noise_o.sigma_max);
  noise_cmd->add_option("--train-images", noise_o.train_images,
                        "source images for the permuted half");
  noise_cmd->add_option("--seed", noise_o.seed);
  noise_cmd->add_option("--out", noise_o.out)->required();
  noise_cmd->add_option("--pgm-dir", noise_o.pgm_dir, "preview directory");
  noise_cmd->add_option("--pgm-count", noise_o.pgm_count);
  noise_cmd->add_option("--config", config_path, "JSON overriding these flags");

  // Pre-scan for --config so its values can be appended after the user's
  // flags (config overrides flags).
  std::vector<std::string> args;
  std::string config_file;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      config_file = argv[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      config_file = a.substr(9);
    } else {
      args.push_back(a);
    }
  }
  try {
    if (!config_file.empty()) {
      for (std::string& t : config_overrides(config_file)) {
        args.push_back(std::move(t));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  // CLI11 consumes tokens back to front.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_o);
    if (eval_cmd->parsed()) return run_eval(eval_o);
    if (attack_cmd->parsed()) return run_attack(attack_o);
    if (probe_cmd->parsed()) return run_probe(probe_o);
    if (regions_cmd->parsed()) return run_regions(regions_o);
    if (noise_cmd->parsed()) return run_noise(noise_o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace parn::cli
