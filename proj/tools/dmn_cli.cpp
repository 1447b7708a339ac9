#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "dmn/bench.hpp"
#include "dmn/metrics.hpp"
#include "dmn/train.hpp"

namespace {

using namespace dmn;

std::pair<int, int> parse_size(const std::string& s) {
  auto x = s.find('x');
  if (x == std::string::npos) x = s.find('X');
  if (x == std::string::npos)
    throw ContractViolation("size must be HxW, got '" + s + "'");
  int h = std::stoi(s.substr(0, x));
  int w = std::stoi(s.substr(x + 1));
  if (h <= 0 || w <= 0) throw ContractViolation("size extents must be positive");
  return {h, w};
}

DmnConfig load_config(const std::string& path) {
  if (path.empty()) return DmnConfig{};
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed config " + path + ": " + e.what());
  }
  return j.get<DmnConfig>();
}

void print_report(const EvalReport& rep) {
  std::printf("threshold: %.2f\n", rep.threshold);
  std::printf("cumulative mIoU: %.4f\n", rep.miou);
  std::printf("mean per-image IoU: %.4f\n", rep.mean_iou);
  for (size_t l = 0; l < kPrLevels.size(); ++l)
    std::printf("Pr@%.1f: %.1f%%\n", kPrLevels[l], rep.pr[l]);
}

int run_gen_data(const std::string& out, int count, const std::string& size, uint64_t seed) {
  SceneSpec spec;
  std::tie(spec.h, spec.w) = parse_size(size);
  std::mt19937_64 master(seed);
  std::vector<Example> examples;
  examples.reserve(count);
  for (int i = 0; i < count; ++i) examples.push_back(generate_example(master(), spec));
  write_dataset(examples, out);
  std::printf("wrote %d examples (%dx%d) to %s\n", count, spec.h, spec.w, out.c_str());
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& stage_str, const std::string& resume,
              const std::string& out, int epochs, double lr_override, int64_t seed_override) {
  Stage stage = parse_stage(stage_str);
  std::vector<Example> data = load_dataset(data_dir);
  DmnConfig cfg = load_config(config_path);
  if (seed_override >= 0) cfg.seed = (uint64_t)seed_override;

  std::optional<DmnModel> model;
  if (!resume.empty()) {
    model.emplace(DmnModel::load(resume));
  } else {
    if (stage == Stage::high_res)
      throw ContractViolation("stage high requires --resume with a stage-1 checkpoint");
    Rng rng(cfg.seed);
    model.emplace(cfg, build_vocabulary(data), rng);
  }

  TrainOptions opts;
  opts.epochs = epochs;
  opts.lr = lr_override > 0 ? lr_override : model->config().lr;
  opts.pos_weight = model->config().pos_weight;
  opts.end_to_end = model->config().end_to_end_stage2;
  opts.on_epoch = [](int e, Scalar loss, Scalar lr) {
    std::printf("epoch %d  loss %.6f  lr %.2e\n", e, loss, lr);
  };
  train(*model, data, stage, opts);
  model->save(out);
  std::printf("saved checkpoint to %s\n", out.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& threshold) {
  DmnModel model = DmnModel::load(ckpt);
  std::vector<Example> data = load_dataset(data_dir);
  std::vector<Tensor> heatmaps = predict_heatmaps(model, data);
  Scalar theta;
  if (threshold == "auto") {
    theta = calibrate_threshold_heatmaps(heatmaps, data);
  } else {
    theta = std::stod(threshold);
    if (theta < 0.0 || theta > 1.0)
      throw ContractViolation("threshold must be in [0,1] or 'auto'");
  }
  print_report(evaluate_heatmaps(heatmaps, data, theta));
  return 0;
}

int run_predict(const std::string& ckpt, const std::string& image_path,
                const std::string& query, const std::string& out) {
  DmnModel model = DmnModel::load(ckpt);
  Example ex;
  std::vector<uint8_t> rgb = read_ppm(image_path, ex.h, ex.w);
  ex.image.resize(rgb.size());
  for (size_t i = 0; i < rgb.size(); ++i) ex.image[i] = rgb[i] / 255.0;
  NoGradGuard ng;
  Tensor hm = model.forward(image_to_tensor(ex), model.vocab().encode(query),
                            Stage::high_res);
  std::vector<uint8_t> gray(hm.size());
  for (long i = 0; i < hm.size(); ++i)
    gray[i] = (uint8_t)std::lround(std::clamp(hm.val(i), 0.0, 1.0) * 255.0);
  write_pgm(out, gray, hm.dim(1), hm.dim(2));
  std::printf("wrote heatmap to %s\n", out.c_str());
  return 0;
}

int run_bench(int d, int T, int reps, const std::string& out) {
  BenchReport rep = bench_recurrent(d, T, reps);
  std::fputs(bench_text(rep).c_str(), stdout);
  if (!out.empty()) {
    bench_csv(rep, out);
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic multimodal network for referring-expression segmentation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
  std::string gen_out, gen_size = "32x32";
  int gen_count = 100;
  uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of examples");
  gen->add_option("--size", gen_size, "image size HxW");
  gen->add_option("--seed", gen_seed, "master seed");

  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_data, tr_stage = "low", tr_resume, tr_out = "dmn.ckpt";
  int tr_epochs = 10;
  double tr_lr = -1;
  int64_t tr_seed = -1;
  tr->add_option("--config", tr_config, "JSON config file");
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--stage", tr_stage, "training stage: low|high");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");
  tr->add_option("--out", tr_out, "checkpoint output path");
  tr->add_option("--epochs", tr_epochs, "number of epochs");
  tr->add_option("--lr", tr_lr, "learning rate override");
  tr->add_option("--seed", tr_seed, "seed override");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_threshold = "0.5";
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--threshold", ev_threshold, "binarization threshold or 'auto'");

  auto* pr = app.add_subcommand("predict", "run one image-query pair");
  std::string pr_ckpt, pr_image, pr_query, pr_out = "heatmap.pgm";
  pr->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
  pr->add_option("--image", pr_image, "input PPM image")->required();
  pr->add_option("--query", pr_query, "referring expression")->required();
  pr->add_option("--out", pr_out, "output PGM heatmap");

  auto* be = app.add_subcommand("bench", "SRU vs LSTM timing benchmark");
  int be_d = 256, be_T = 64, be_reps = 10;
  std::string be_out;
  be->add_option("--d", be_d, "hidden width");
  be->add_option("--T", be_T, "sequence length");
  be->add_option("--reps", be_reps, "repetitions (>= 10)");
  be->add_option("--out", be_out, "CSV report path");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen_data(gen_out, gen_count, gen_size, gen_seed);
    if (tr->parsed())
      return run_train(tr_config, tr_data, tr_stage, tr_resume, tr_out, tr_epochs, tr_lr,
                       tr_seed);
    if (ev->parsed()) return run_eval(ev_ckpt, ev_data, ev_threshold);
    if (pr->parsed()) return run_predict(pr_ckpt, pr_image, pr_query, pr_out);
    if (be->parsed()) return run_bench(be_d, be_T, be_reps, be_out);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const dmn::ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dmn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
