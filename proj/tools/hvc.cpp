#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

#include "hvc/config.hpp"
#include "hvc/gradcheck.hpp"
#include "hvc/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit
{
  ok = 0,
  validation = 1,
  numeric = 2,
};

struct Common
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required)
{
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed override");
  auto* out = cmd->add_option("--out", c.out, "output location");
  if (out_required)
    out->required();
}

hvc::RunConfig base_config(const Common& c)
{
  return c.config.empty() ? hvc::RunConfig{} : hvc::load_config(c.config);
}

void write_resolved(const fs::path& dir, const hvc::RunConfig& cfg)
{
  hvc::write_file_atomic(dir / "config.json", cfg.to_json());
}

void summary(json j)
{
  std::cout << j.dump() << std::endl;
}

std::string frame_name(int i)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", i);
  return buf;
}

int cmd_gen_data(const Common& c)
{
  auto cfg = base_config(c);
  if (c.seed)
    cfg.data.corpus.seed = *c.seed;
  cfg.data.root = fs::absolute(c.out).string();
  cfg.validate();
  hvc::write_corpus(c.out, cfg.data.corpus);
  write_resolved(c.out, cfg);
  summary({{"command", "gen-data"},
           {"root", cfg.data.root},
           {"train_images", cfg.data.corpus.train_images},
           {"eval_videos", cfg.data.corpus.eval_videos}});
  return ok;
}

int cmd_train(const Common& c, const std::string& data)
{
  auto cfg = base_config(c);
  if (c.seed)
    cfg.seed = *c.seed;
  if (!data.empty())
    cfg.data.root = data;
  cfg.validate();
  const fs::path out = c.out;
  fs::create_directories(out);
  write_resolved(out, cfg);

  hvc::Trainer trainer(cfg, hvc::load_training_images(cfg));
  std::vector<hvc::StepRecord> log;
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t report_every = std::max<std::int64_t>(1, trainer.total_steps() / 20);
  try
  {
    while (!trainer.done())
    {
      log.push_back(trainer.step());
      const auto& r = log.back();
      if (r.step % report_every == 0 || trainer.done())
        std::fprintf(stderr, "step %lld/%lld loss %.6f m %.6f\n", (long long)r.step,
                     (long long)trainer.total_steps(), r.loss, r.m);
    }
  }
  catch (const hvc::NonFiniteGradient& e)
  {
    hvc::save_checkpoint(out / "checkpoint.hvc", trainer.checkpoint());
    hvc::write_file_atomic(out / "loss.csv", hvc::loss_log_csv(log));
    std::cerr << "error: " << e.what() << " at step " << trainer.step_count()
              << "; checkpoint of the last good step written\n";
    summary({{"command", "train"}, {"status", "non-finite"}, {"step", trainer.step_count()}});
    return numeric;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  hvc::save_checkpoint(out / "checkpoint.hvc", trainer.checkpoint());
  hvc::write_file_atomic(out / "loss.csv", hvc::loss_log_csv(log));
  summary({{"command", "train"},
           {"status", "ok"},
           {"steps", trainer.step_count()},
           {"skipped_images", trainer.skipped_images()},
           {"first_loss", log.empty() ? 0.0 : log.front().loss},
           {"last_loss", log.empty() ? 0.0 : log.back().loss},
           {"seconds", seconds},
           {"checkpoint", (out / "checkpoint.hvc").string()}});
  return ok;
}

int cmd_gradcheck(const Common& c, int trials)
{
  hvc::GradCheckOptions opts;
  opts.trials = trials;
  if (c.seed)
    opts.seed = *c.seed;
  const auto results = hvc::run_gradcheck(opts);
  json report = json::array();
  bool all = true;
  for (const auto& r : results)
  {
    std::printf("%-24s trials %3d redrawn %3d max_rel_err %.3e tol %.0e %s\n", r.name.c_str(),
                r.trials, r.redrawn, r.max_rel_error, r.tolerance,
                r.passed() ? "PASS" : "FAIL");
    all = all && r.passed();
    report.push_back({{"name", r.name},
                      {"trials", r.trials},
                      {"redrawn", r.redrawn},
                      {"max_rel_error", r.max_rel_error},
                      {"tolerance", r.tolerance},
                      {"passed", r.passed()}});
  }
  if (!c.out.empty())
    hvc::write_file_atomic(c.out, report.dump(2) + "\n");
  summary({{"command", "gradcheck"}, {"passed", all}, {"checks", results.size()}});
  return all ? ok : numeric;
}

// Propagates one video and writes its masks plus a JSON-lines summary.
int propagate_video(const hvc::FeatureExtractor& extract, const hvc::PropagationConfig& pcfg,
                    const fs::path& frames_dir, const fs::path& first_mask,
                    const fs::path& out_dir)
{
  std::vector<hvc::ImageBuffer> frames;
  for (const auto& p : hvc::list_images(frames_dir))
    frames.push_back(hvc::read_image(p));
  if (frames.size() < 2)
    throw hvc::IoError("need at least two frames in " + frames_dir.string());
  const auto first = hvc::read_labels(first_mask);
  if (first.rows() != frames[0].height || first.cols() != frames[0].width)
    throw hvc::ShapeMismatch("first mask does not match the frame size: " +
                             first_mask.string());
  const int classes = first.maxCoeff() + 1;
  const auto masks = hvc::run_video(extract, frames, first, pcfg, classes);

  std::string lines;
  for (std::size_t t = 0; t < masks.size(); ++t)
  {
    hvc::write_labels(out_dir / frame_name(int(t)), masks[t]);
    json counts = json::object();
    for (int k = 0; k < classes; ++k)
      counts[std::to_string(k)] = (masks[t].array() == k).count();
    lines += json{{"frame", t}, {"pixels", counts}}.dump() + "\n";
  }
  hvc::write_file_atomic(out_dir / "summary.jsonl", lines);
  return int(masks.size());
}

int cmd_propagate(const Common& c, const std::string& checkpoint, const std::string& video,
                  const std::string& first_mask, const std::string& frames_root,
                  const std::string& masks_root)
{
  const auto ckpt = hvc::load_checkpoint(checkpoint);
  auto cfg = c.config.empty() ? hvc::checkpoint_config(ckpt) : base_config(c);
  cfg.validate();
  const auto net = hvc::load_target_encoder(ckpt);
  const auto extract = hvc::target_extractor(net, cfg.propagation.input_scale);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_resolved(out, cfg);

  int videos = 0, frames = 0;
  if (!video.empty())
  {
    if (first_mask.empty())
      throw hvc::ConfigError("--video needs --first-mask");
    frames += propagate_video(extract, cfg.propagation, video, first_mask, out);
    ++videos;
  }
  else
  {
    if (frames_root.empty() || masks_root.empty())
      throw hvc::ConfigError("give --video/--first-mask or --frames-root/--masks-root");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(frames_root))
      if (e.is_directory())
        dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs)
    {
      const auto name = d.filename();
      const auto gt = hvc::list_images(fs::path(masks_root) / name);
      if (gt.empty())
        throw hvc::IoError("no first-frame mask for video " + name.string());
      frames += propagate_video(extract, cfg.propagation, d, gt.front(), out / name);
      ++videos;
    }
  }
  summary({{"command", "propagate"}, {"videos", videos}, {"frames", frames},
           {"out", out.string()}});
  return ok;
}

int cmd_eval(const Common& c, const std::string& pred, const std::string& gt)
{
  const auto cfg = base_config(c);
  const auto report = hvc::evaluate_dataset(pred, gt, cfg.metrics);
  std::cout << report.to_table();
  for (const auto& issue : report.issues)
    std::cerr << "warning: " << issue << "\n";
  if (!c.out.empty())
    hvc::write_file_atomic(c.out, report.to_json() + "\n");
  summary({{"command", "eval"},
           {"J&F_m", report.jf_mean},
           {"J_m", report.j_mean},
           {"F_m", report.f_mean},
           {"objects", report.objects.size()},
           {"issues", report.issues.size()}});
  return ok;
}

void apply_thread_cap()
{
  if (const char* env = std::getenv("HVC_THREADS"))
  {
    const int n = std::atoi(env);
    if (n > 0)
      Eigen::setNbThreads(n);
  }
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Self-supervised dense correspondence: data, training, propagation, evaluation"};
  app.require_subcommand(1);

  Common gen_c, train_c, grad_c, prop_c, eval_c;
  std::string data, checkpoint, video, first_mask, frames_root, masks_root, pred, gt;
  int trials = 20;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic corpus");
  add_common(gen, gen_c, true);

  auto* train = app.add_subcommand("train", "train online/target encoders");
  add_common(train, train_c, true);
  train->add_option("--data", data, "dataset root (default: in-memory corpus)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(grad, grad_c, false);
  grad->add_option("--trials", trials, "trials per check")->check(CLI::PositiveNumber);

  auto* prop = app.add_subcommand("propagate", "propagate first-frame labels");
  add_common(prop, prop_c, true);
  prop->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  prop->add_option("--video", video, "directory of frames")->check(CLI::ExistingDirectory);
  prop->add_option("--first-mask", first_mask, "indexed first-frame mask")
      ->check(CLI::ExistingFile);
  prop->add_option("--frames-root", frames_root, "one frame directory per video")
      ->check(CLI::ExistingDirectory);
  prop->add_option("--masks-root", masks_root, "one mask directory per video")
      ->check(CLI::ExistingDirectory);

  auto* ev = app.add_subcommand("eval", "score predicted masks");
  add_common(ev, eval_c, false);
  ev->add_option("--pred", pred, "prediction root")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", gt, "ground-truth root")->required()->check(CLI::ExistingDirectory);

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? ok : validation;
  }

  apply_thread_cap();
  try
  {
    if (*gen)
      return cmd_gen_data(gen_c);
    if (*train)
      return cmd_train(train_c, data);
    if (*grad)
      return cmd_gradcheck(grad_c, trials);
    if (*prop)
      return cmd_propagate(prop_c, checkpoint, video, first_mask, frames_root, masks_root);
    if (*ev)
      return cmd_eval(eval_c, pred, gt);
  }
  catch (const hvc::NonFiniteGradient& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return numeric;
  }
  catch (const hvc::DegenerateBatch& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return numeric;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return validation;
  }
  return validation;
}
