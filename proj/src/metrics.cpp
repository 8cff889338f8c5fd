#include "hvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace hvc {

double jaccard(const BinaryMask& pred, const BinaryMask& gt)
{
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw ShapeMismatch("jaccard: masks differ in shape");
  const auto inter = (pred && gt).count();
  const auto uni = (pred || gt).count();
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

BinaryMask boundary_map(const BinaryMask& mask)
{
  const Eigen::Index h = mask.rows(), w = mask.cols();
  BinaryMask out = BinaryMask::Constant(h, w, false);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
    {
      if (!mask(y, x))
        continue;
      const bool edge = (y > 0 && !mask(y - 1, x)) || (y + 1 < h && !mask(y + 1, x)) ||
                        (x > 0 && !mask(y, x - 1)) || (x + 1 < w && !mask(y, x + 1));
      out(y, x) = edge;
    }
  return out;
}

BinaryMask dilate_disc(const BinaryMask& mask, int radius)
{
  const Eigen::Index h = mask.rows(), w = mask.cols();
  BinaryMask out = BinaryMask::Constant(h, w, false);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
    {
      if (!mask(y, x))
        continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
        {
          if (dx * dx + dy * dy > radius * radius)
            continue;
          const Eigen::Index yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w)
            out(yy, xx) = true;
        }
    }
  return out;
}

int boundary_tolerance(int height, int width, double tol_frac)
{
  return int(std::ceil(tol_frac * std::hypot(double(height), double(width))));
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, double tol_frac)
{
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw ShapeMismatch("boundary_f: masks differ in shape");
  const BinaryMask pb = boundary_map(pred);
  const BinaryMask gb = boundary_map(gt);
  const auto np = pb.count();
  const auto ng = gb.count();
  if (np == 0 && ng == 0)
    return 1.0;
  if (np == 0 || ng == 0)
    return 0.0;
  const int r = boundary_tolerance(int(pred.rows()), int(pred.cols()), tol_frac);
  const double precision = double((pb && dilate_disc(gb, r)).count()) / double(np);
  const double recall = double((gb && dilate_disc(pb, r)).count()) / double(ng);
  if (precision + recall == 0.0)
    return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<ObjectScore> evaluate_video(const std::string& name,
                                        const std::vector<LabelImage>& predictions,
                                        const std::vector<LabelImage>& groundtruth,
                                        const EvalOptions& opts,
                                        std::vector<std::string>* issues)
{
  auto report = [&](const std::string& msg) {
    if (issues)
      issues->push_back(name + ": " + msg);
  };
  std::vector<ObjectScore> out;
  if (groundtruth.empty())
    return out;

  std::set<int> classes;
  const auto& first = groundtruth.front();
  for (Eigen::Index i = 0; i < first.size(); ++i)
    if (first.data()[i] != 0)
      classes.insert(first.data()[i]);

  const int n = int(groundtruth.size());
  const int scored = std::max(0, n - 1);
  const int start =
      n - std::max(1, int(std::ceil(std::clamp(opts.last_fraction, 0.0, 1.0) * scored)));
  for (int c : classes)
  {
    ObjectScore s;
    s.video = name;
    s.class_id = c;
    out.push_back(s);
  }

  for (int t = std::max(1, start); t < n; ++t)
  {
    const auto& gt = groundtruth[t];
    LabelImage pred;
    if (t < int(predictions.size()))
      pred = predictions[t];
    if (pred.size() == 0)
    {
      report("MissingFrame " + std::to_string(t));
      pred = LabelImage::Zero(gt.rows(), gt.cols());
    }
    else if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    {
      report("ShapeMismatch at frame " + std::to_string(t));
      pred = LabelImage::Zero(gt.rows(), gt.cols());
    }
    for (Eigen::Index i = 0; i < pred.size(); ++i)
    {
      const int v = pred.data()[i];
      if (v != 0 && !classes.count(v))
      {
        report("ClassMismatch: frame " + std::to_string(t) + " predicts unknown class " +
               std::to_string(v));
        break;
      }
    }
    for (auto& s : out)
    {
      const BinaryMask pm = class_mask(pred, s.class_id);
      const BinaryMask gm = class_mask(gt, s.class_id);
      s.j.push_back(jaccard(pm, gm));
      s.f.push_back(boundary_f(pm, gm, opts.tol_frac));
    }
  }

  for (auto& s : out)
  {
    if (s.j.empty())
      continue;
    const double k = double(s.j.size());
    double jr = 0, fr = 0;
    for (std::size_t i = 0; i < s.j.size(); ++i)
    {
      s.j_mean += s.j[i] / k;
      s.f_mean += s.f[i] / k;
      jr += s.j[i] > opts.recall_threshold ? 1.0 : 0.0;
      fr += s.f[i] > opts.recall_threshold ? 1.0 : 0.0;
    }
    s.j_recall = jr / k;
    s.f_recall = fr / k;
  }
  return out;
}

EvalReport aggregate(std::vector<ObjectScore> objects, const EvalOptions&)
{
  EvalReport r;
  r.objects = std::move(objects);
  if (!r.objects.empty())
  {
    const double k = double(r.objects.size());
    for (const auto& o : r.objects)
    {
      r.j_mean += o.j_mean / k;
      r.f_mean += o.f_mean / k;
      r.j_recall += o.j_recall / k;
      r.f_recall += o.f_recall / k;
    }
  }
  r.jf_mean = (r.j_mean + r.f_mean) / 2.0;
  return r;
}

EvalReport evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir,
                            const EvalOptions& opts)
{
  if (!fs::is_directory(gt_dir))
    throw IoError("ground-truth directory not found: " + gt_dir.string());
  std::vector<fs::path> videos;
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_directory())
      videos.push_back(e.path());
  std::sort(videos.begin(), videos.end());

  std::vector<ObjectScore> objects;
  std::vector<std::string> issues;
  for (const auto& vdir : videos)
  {
    const std::string name = vdir.filename().string();
    const auto gt_files = list_images(vdir);
    std::map<std::string, fs::path> pred_files;
    if (fs::is_directory(pred_dir / name))
      for (const auto& p : list_images(pred_dir / name))
        pred_files[p.stem().string()] = p;
    else
      issues.push_back(name + ": MissingFrame (no prediction directory)");

    std::vector<LabelImage> gts, preds;
    for (const auto& g : gt_files)
    {
      gts.push_back(read_labels(g));
      auto it = pred_files.find(g.stem().string());
      preds.push_back(it == pred_files.end() ? LabelImage() : read_labels(it->second));
    }
    auto scores = evaluate_video(name, preds, gts, opts, &issues);
    objects.insert(objects.end(), scores.begin(), scores.end());
  }
  auto report = aggregate(std::move(objects), opts);
  report.issues = std::move(issues);
  return report;
}

std::string EvalReport::to_json() const
{
  nlohmann::ordered_json j;
  j["J_mean"] = j_mean;
  j["F_mean"] = f_mean;
  j["JF_mean"] = jf_mean;
  j["J_recall"] = j_recall;
  j["F_recall"] = f_recall;
  j["convention"] = empty_convention;
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : objects)
    j["objects"].push_back({{"video", o.video},
                            {"class", o.class_id},
                            {"J_mean", o.j_mean},
                            {"F_mean", o.f_mean},
                            {"J_recall", o.j_recall},
                            {"F_recall", o.f_recall},
                            {"J", o.j},
                            {"F", o.f}});
  j["issues"] = issues;
  return j.dump(2);
}

std::string EvalReport::to_table() const
{
  std::ostringstream ss;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %6s %8s %8s %8s %8s\n", "video", "class", "J_m",
                "J_r", "F_m", "F_r");
  ss << line;
  for (const auto& o : objects)
  {
    std::snprintf(line, sizeof line, "%-16s %6d %8.4f %8.4f %8.4f %8.4f\n", o.video.c_str(),
                  o.class_id, o.j_mean, o.j_recall, o.f_mean, o.f_recall);
    ss << line;
  }
  std::snprintf(line, sizeof line, "%-16s %6s %8.4f %8.4f %8.4f %8.4f\n", "mean", "", j_mean,
                j_recall, f_mean, f_recall);
  ss << line;
  std::snprintf(line, sizeof line, "J&F_m %.6f\n", jf_mean);
  ss << line;
  return ss.str();
}

} /* namespace hvc */
