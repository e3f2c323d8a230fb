// Copyright 2026 The BOFL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bofl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "bofl/error.hpp"
#include "bofl/kernels.hpp"
#include "bofl/tensor_io.hpp"

namespace bofl {

namespace {

constexpr double kDivergenceThreshold = 1e6;

// Targets of every image, rendered once.
std::vector<std::vector<double>> render_all(const SynthDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.images.size());
  for (const auto& img : ds.images) {
    out.push_back(render_heatmap(img.objects, ds.spec.num_classes, ds.spec.height, ds.spec.width,
                                 ds.spec.gaussian_sigma));
  }
  return out;
}

// Logits of one image, (C, H, W), appended to `out`.
void image_logits(const LinearModel& model, const SynthDataset& ds, const SynthImage& img,
                  std::vector<double>& out) {
  const size_t plane = static_cast<size_t>(ds.spec.height) * ds.spec.width;
  const size_t base = out.size();
  out.resize(base + model.classes * plane);
  for (int c = 0; c < model.classes; ++c) {
    double* ch = out.data() + base + c * plane;
    std::fill(ch, ch + plane, model.bias[c]);
    for (const auto& obj : img.objects) {
      ch[obj.cy * ds.spec.width + obj.cx] = model.logit(c, obj.feature);
    }
  }
}

HeatmapBatch make_batch(const LinearModel& model, const SynthDataset& ds,
                        std::span<const size_t> indices,
                        const std::vector<std::vector<double>>& targets) {
  BatchShape shape{indices.size(), static_cast<size_t>(model.classes),
                   static_cast<size_t>(ds.spec.height), static_cast<size_t>(ds.spec.width)};
  std::vector<double> logits;
  logits.reserve(shape.size());
  std::vector<double> y;
  y.reserve(shape.size());
  for (size_t k : indices) {
    image_logits(model, ds, ds.images[k], logits);
    y.insert(y.end(), targets[k].begin(), targets[k].end());
  }
  return HeatmapBatch(shape, std::move(logits), std::move(y));
}

WeightingFactors weighting_for(const ClassStats& stats, const TrainConfig& cfg) {
  WeightingFactors w;
  switch (cfg.weighting) {
    case WeightingSource::None:
      w = WeightingFactors::uniform(stats.num_classes());
      break;
    case WeightingSource::InverseFrequency:
      w = inverse_frequency_alpha(stats);
      break;
    case WeightingSource::EffectiveNumber:
      w = effective_number_alpha(stats, cfg.effnum_beta);
      break;
  }
  w.intensity = cfg.schedule.intensity;
  return w;
}

std::string fmt_num(double v) { return fmt::format("{:.12g}", v); }

}  // namespace

std::string_view to_string(WeightingSource source) {
  switch (source) {
    case WeightingSource::None:
      return "none";
    case WeightingSource::EffectiveNumber:
      return "effective_number";
    case WeightingSource::InverseFrequency:
      return "inverse_frequency";
  }
  return "unknown";
}

std::optional<WeightingSource> parse_weighting_source(std::string_view name) {
  for (auto s : {WeightingSource::None, WeightingSource::EffectiveNumber,
                 WeightingSource::InverseFrequency}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 1) problems.push_back("epochs must be >= 1");
  if (batch_images < 1) problems.push_back("batch_images must be >= 1");
  if (schedule.total_epochs != epochs) {
    problems.push_back(fmt::format("schedule.total_epochs ({}) must equal epochs ({})",
                                   schedule.total_epochs, epochs));
  }
  try {
    schedule.validate();
  } catch (const ArgumentError& e) {
    problems.push_back(std::string("schedule: ") + e.what());
  }
  try {
    loss.validate();
  } catch (const ArgumentError& e) {
    problems.push_back(std::string("loss: ") + e.what());
  }
  if (bias_prior_pi && !(*bias_prior_pi > 0.0 && *bias_prior_pi < 1.0)) {
    problems.push_back("bias_prior_pi must lie in (0, 1)");
  }
  if (!(effnum_beta >= 0.0 && effnum_beta < 1.0)) problems.push_back("weighting.beta must lie in [0, 1)");
  if (!(init_std >= 0.0)) problems.push_back("init_std must be >= 0");
  if (!(peak_threshold > 0.0 && peak_threshold < 1.0)) {
    problems.push_back("peak_threshold must lie in (0, 1)");
  }
  if (tail_ratio && !(*tail_ratio > 0.0 && *tail_ratio < 1.0)) {
    problems.push_back("tail_ratio must lie in (0, 1)");
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

double LinearModel::logit(int cls, std::span<const double> feature) const {
  const double* w = weights.data() + static_cast<size_t>(cls) * feature_dim;
  double z = bias[cls];
  for (int d = 0; d < feature_dim; ++d) z += w[d] * feature[d];
  return z;
}

std::vector<float> LinearModel::packed() const {
  std::vector<float> out;
  out.reserve(static_cast<size_t>(classes) * (feature_dim + 1));
  for (int c = 0; c < classes; ++c) {
    for (int d = 0; d < feature_dim; ++d) out.push_back(static_cast<float>(weights[c * feature_dim + d]));
    out.push_back(static_cast<float>(bias[c]));
  }
  return out;
}

double prior_bias(double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw ArgumentError("prior probability must lie in (0, 1)");
  return -std::log((1.0 - pi) / pi);
}

LinearModel init_model(const SynthSpec& spec, const TrainConfig& cfg) {
  LinearModel m;
  m.classes = spec.num_classes;
  m.feature_dim = spec.feature_dim;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  m.weights.resize(static_cast<size_t>(m.classes) * m.feature_dim);
  for (auto& w : m.weights) w = cfg.init_std * normal(rng);
  m.bias.assign(m.classes, cfg.bias_prior_pi ? prior_bias(*cfg.bias_prior_pi) : 0.0);
  return m;
}

void gradient_descent_step(std::span<double> params, std::span<const double> gradient, double lr) {
  if (params.size() != gradient.size()) {
    throw ArgumentError(fmt::format("parameter/gradient size mismatch ({} vs {})", params.size(),
                                    gradient.size()));
  }
  if (!std::isfinite(lr)) throw ArgumentError("learning rate is not finite");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i]) || !std::isfinite(gradient[i])) {
      throw ArgumentError(fmt::format("non-finite parameter or gradient at index {}", i));
    }
  }
  for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * gradient[i];
}

std::vector<std::vector<size_t>> epoch_batches(uint64_t seed, int epoch, size_t images,
                                               int batch_images) {
  if (batch_images < 1) throw ArgumentError("batch_images must be >= 1");
  std::vector<size_t> order(images);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<size_t>> batches;
  for (size_t i = 0; i < images; i += batch_images) {
    const size_t end = std::min(images, i + static_cast<size_t>(batch_images));
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

HeatmapBatch build_batch(const LinearModel& model, const SynthDataset& dataset,
                         std::span<const size_t> image_indices) {
  std::vector<std::vector<double>> targets(dataset.images.size());
  for (size_t k : image_indices) {
    if (k >= dataset.images.size()) throw ArgumentError("image index out of range");
    const auto& img = dataset.images[k];
    targets[k] = render_heatmap(img.objects, dataset.spec.num_classes, dataset.spec.height,
                                dataset.spec.width, dataset.spec.gaussian_sigma);
  }
  return make_batch(model, dataset, image_indices, targets);
}

EvalReport evaluate(const LinearModel& model, const SynthDataset& heldout, double peak_threshold,
                    const std::vector<bool>& is_tail) {
  if (heldout.images.empty()) throw EmptyDatasetError("held-out set is empty");
  if (heldout.spec.num_classes != model.classes || heldout.spec.feature_dim != model.feature_dim) {
    throw ShapeError("held-out set does not match the model's classes/features");
  }
  PeakEvaluator ev(model.classes, peak_threshold);
  const auto& s = heldout.spec;
  std::vector<double> logits, probs;
  for (const auto& img : heldout.images) {
    logits.clear();
    image_logits(model, heldout, img, logits);
    probs.resize(logits.size());
    kernels::sigmoid_plane(logits, probs);
    const auto y = render_heatmap(img.objects, s.num_classes, s.height, s.width, s.gaussian_sigma);
    ev.add_image(probs, y, s.height, s.width);
  }
  return ev.finish(is_tail);
}

RunSummary TrainLog::summary() const {
  RunSummary s;
  s.label = label;
  s.dataset_seed = dataset_seed;
  if (!epochs.empty()) s.final_eval = epochs.back().eval;
  return s;
}

TrainLog train(const SynthDataset& train_set, const SynthDataset& heldout, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.images.empty()) throw EmptyDatasetError("training set is empty");

  const ClassStats stats = ingest_annotations(to_annotation_json(train_set).dump());
  TrainLog log;
  log.dataset_seed = train_set.spec.seed;
  log.train_seed = cfg.seed;
  log.class_ids = stats.class_ids;
  log.weighting = weighting_for(stats, cfg);

  std::vector<bool> is_tail;
  if (cfg.tail_ratio) {
    const auto split = split_head_tail(stats, *cfg.tail_ratio);
    for (int64_t id : stats.class_ids) is_tail.push_back(split.tail.contains(id));
  }

  LinearModel model = init_model(train_set.spec, cfg);
  log.initial_model = model;
  const auto targets = render_all(train_set);

  const size_t n_images = train_set.images.size();
  const int steps_per_epoch =
      static_cast<int>((n_images + cfg.batch_images - 1) / static_cast<size_t>(cfg.batch_images));
  const int total_iters = cfg.epochs * steps_per_epoch;
  const size_t classes = static_cast<size_t>(model.classes);
  const size_t fdim = static_cast<size_t>(model.feature_dim);
  const size_t plane = static_cast<size_t>(train_set.spec.height) * train_set.spec.width;
  const auto& sched = cfg.schedule;

  std::vector<double> grad_w(model.weights.size());
  std::vector<double> grad_b(model.bias.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(cfg.seed, epoch, n_images, cfg.batch_images);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const int iter = epoch * steps_per_epoch + step;
      const int step_arg = sched.update_cycle == UpdateCycle::PerStep ? step : 0;
      const double lambda = normalized_epoch(epoch, step_arg, steps_per_epoch, sched);

      std::vector<double> alpha_hat(classes);
      for (size_t i = 0; i < classes; ++i) {
        alpha_hat[i] = scheduled_alpha(log.weighting.alphas[i], lambda, sched.intensity);
      }
      const double eta_hat = scheduled_alpha(sched.eta, lambda, 1.0);

      const auto& indices = batches[step];
      const HeatmapBatch batch = make_batch(model, train_set, indices, targets);
      LossWeights lw;
      lw.alphas = alpha_hat;
      if (cfg.loss.kind == LossKind::BOFL) lw.per_image = batch_balanced_weights(alpha_hat, eta_hat, batch);
      const LossReport report = compute_loss(batch, lw, cfg.loss);

      if (!std::isfinite(report.total) || report.total > kDivergenceThreshold) {
        throw DivergenceError(fmt::format(
            "training diverged at epoch {} iteration {}: loss = {} (lambda {}, lr {})", epoch, iter,
            report.total, lambda, learning_rate(iter, total_iters, sched)));
      }

      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (size_t k = 0; k < indices.size(); ++k) {
        const auto& img = train_set.images[indices[k]];
        for (size_t i = 0; i < classes; ++i) {
          const double* g = report.gradient.data() + (k * classes + i) * plane;
          double gb = 0.0;
          for (size_t c = 0; c < plane; ++c) gb += g[c];
          grad_b[i] += gb;
          double* gw = grad_w.data() + i * fdim;
          for (const auto& obj : img.objects) {
            const double go = g[obj.cy * train_set.spec.width + obj.cx];
            for (size_t d = 0; d < fdim; ++d) gw[d] += go * obj.feature[d];
          }
        }
      }

      const double lr = learning_rate(iter, total_iters, sched);
      gradient_descent_step(model.weights, grad_w, lr);
      gradient_descent_step(model.bias, grad_b, lr);

      log.steps.push_back({iter, epoch, lr, lambda, report.total});
      loss_sum += report.total;
      rec.lambda = lambda;
      rec.lr = lr;
      rec.alpha_hat = alpha_hat;
      rec.eta_hat = eta_hat;
    }
    rec.loss = loss_sum / steps_per_epoch;
    rec.eval = evaluate(model, heldout, cfg.peak_threshold, is_tail);
    log.epochs.push_back(std::move(rec));
  }
  log.model = std::move(model);
  return log;
}

void write_epoch_csv(std::ostream& out, const TrainLog& log) {
  out << "epoch,lambda,lr,loss";
  for (int64_t id : log.class_ids) out << ",recall_" << id;
  out << ",min_class_recall,macro_recall\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << fmt_num(e.lambda) << ',' << fmt_num(e.lr) << ',' << fmt_num(e.loss);
    for (double r : e.eval.per_class_recall) out << ',' << fmt_num(r);
    out << ',' << fmt_num(e.eval.min_class_recall) << ',' << fmt_num(e.eval.macro_recall) << '\n';
  }
}

void write_steps_csv(std::ostream& out, const TrainLog& log) {
  out << "iter,epoch,lr,lambda,loss\n";
  for (const auto& s : log.steps) {
    out << s.iter << ',' << s.epoch << ',' << fmt_num(s.lr) << ',' << fmt_num(s.lambda) << ','
        << fmt_num(s.loss) << '\n';
  }
}

void write_weights_csv(std::ostream& out, const TrainLog& log) {
  out << "epoch,class_id,alpha_hat,eta_hat\n";
  for (const auto& e : log.epochs) {
    for (size_t i = 0; i < e.alpha_hat.size(); ++i) {
      out << e.epoch << ',' << log.class_ids[i] << ',' << fmt_num(e.alpha_hat[i]) << ','
          << fmt_num(e.eta_hat) << '\n';
    }
  }
}

void write_model(const std::filesystem::path& path, const LinearModel& model) {
  const std::vector<uint64_t> dims = {static_cast<uint64_t>(model.classes),
                                      static_cast<uint64_t>(model.feature_dim) + 1};
  write_tensor_file(path, dims, model.packed());
}

}  // namespace bofl
