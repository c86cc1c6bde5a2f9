#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpcnn/image.hpp"
#include "mpcnn/manifest.hpp"
#include "mpcnn/network.hpp"

namespace mpcnn {

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t epochs = 1;            // total, counting epochs already done when resuming
  std::size_t val_freq = 10;         // training batches between validation batches
  std::size_t crop = 227;
  std::uint64_t seed = 42;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay = 0.1;
  double min_improvement = 0.001;    // absolute drop in validation top-1 that counts as progress
  std::size_t patience = 3;          // validation points
  std::size_t workers = 1;
  bool augment = true;               // random crop + mirror; off means center crops
  MeanMode mean_mode = MeanMode::PerPosition;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

struct MetricsRow {
  std::size_t epoch = 0;  // 1-based epoch the row was produced in
  std::size_t batch = 0;  // training batches completed so far
  std::string split;      // "train" or "val"
  double loss = 0.0;
  double top1_error = 0.0;
  double top5_error = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

CsvTable metrics_table(std::span<const MetricsRow> rows);

// --- learning-rate plateau ------------------------------------------------------------

/// `history` holds the validation errors observed since the last decay. Decays
/// when it spans at least `patience` points and none of the last `patience`
/// points beat the best earlier point (or the window's first point, when
/// nothing precedes the window) by more than `min_improvement`.
double lr_plateau_step(std::span<const double> history, double current_lr, std::size_t patience,
                       double min_improvement = 0.001, double decay = 0.1);

/// Stateful wrapper: clears the history after each decay, so two decays are
/// always at least `patience` validation points apart.
struct PlateauScheduler {
  double learning_rate = 0.01;
  std::size_t patience = 3;
  double min_improvement = 0.001;
  double decay = 0.1;
  std::vector<double> since_decay;

  /// Records one validation error and returns the learning rate to use next.
  double observe(double val_error);

  bool operator==(const PlateauScheduler&) const = default;
};

// --- data -----------------------------------------------------------------------------

/// Random access to labelled images, already at the canonical size.
class ImageSet {
 public:
  virtual ~ImageSet() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual ImageU8 source(std::size_t i) const = 0;
  virtual ImageU8 bilateral(std::size_t i) const = 0;
};

class MemoryImageSet : public ImageSet {
 public:
  MemoryImageSet(std::vector<ImageU8> source, std::vector<int> labels, std::vector<ImageU8> bilateral = {});
  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t i) const override { return labels_.at(i); }
  ImageU8 source(std::size_t i) const override { return source_.at(i); }
  ImageU8 bilateral(std::size_t i) const override;

 private:
  std::vector<ImageU8> source_;
  std::vector<int> labels_;
  std::vector<ImageU8> bilateral_;
};

/// Images listed in a manifest, decoded and canonicalized on each access.
/// Entries without a cached bilateral image get one filtered on the fly.
class ManifestImageSet : public ImageSet {
 public:
  ManifestImageSet(std::vector<ManifestEntry> entries, std::size_t image_size = kCanonicalSize,
                   BilateralParams bilateral = {});
  std::size_t size() const override { return entries_.size(); }
  int label(std::size_t i) const override { return entries_.at(i).label; }
  ImageU8 source(std::size_t i) const override;
  ImageU8 bilateral(std::size_t i) const override;

 private:
  std::vector<ManifestEntry> entries_;
  std::size_t image_size_;
  BilateralParams bilateral_;
};

/// Per-position means of a set's source images and (optionally) its
/// bilateral images.
struct DatasetMeans {
  MeanImage source;
  std::optional<MeanImage> bilateral;
};

DatasetMeans compute_means(const ImageSet& set, bool with_bilateral, MeanMode mode = MeanMode::PerPosition);

bool uses_bilateral(const NetworkSpec& spec);

/// How each sample of a batch is cropped.
struct CropPolicy {
  std::size_t crop = 227;
  bool augment = false;    // random window + mirror drawn from `seed`; otherwise center
  std::uint64_t seed = 0;  // per-sample seeds are derive_seed(seed, {position})
};

/// Builds the network input for `indices`. The same crop window and mirror
/// are applied to the source and bilateral versions of a sample. Work is
/// spread over `workers` threads; results do not depend on the count.
Batch<float> assemble_batch(const ImageSet& set, std::span<const std::size_t> indices, const DatasetMeans& means,
                            bool with_bilateral, const CropPolicy& policy, std::size_t workers = 1);

struct EvalResult {
  double loss = 0.0;
  double top1_error = 0.0;
  double top5_error = 0.0;
  std::size_t count = 0;
};

/// Center-crop, inference-mode evaluation of a whole set.
EvalResult evaluate(Network<float>& net, const ImageSet& set, const DatasetMeans& means, std::size_t crop,
                    std::size_t batch_size = 100, std::size_t workers = 1);

// --- trainer --------------------------------------------------------------------------

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t batch = 0;  // completed training batches
  PlateauScheduler scheduler;
  std::vector<MetricsRow> metrics;
  std::size_t validations = 0;  // validation batches scored so far
  // Sample-weighted sums over the training batches since the last train row.
  double window_loss = 0, window_top1 = 0, window_top5 = 0;
  std::size_t window_samples = 0;

  bool operator==(const TrainState&) const = default;
};

/// Mini-batch SGD with the validation cadence: every `val_freq` training
/// batches, one validation batch is scored and a val row plus a train row
/// (averaged over the batches since the previous row) are appended.
///
/// Everything random is derived from the seed and the position in the run
/// (epoch, batch, sample), so a run resumed from an epoch-end checkpoint
/// continues exactly as the uninterrupted run would.
class Trainer {
 public:
  Trainer(Network<float>& net, const ImageSet& train, const ImageSet* val, TrainConfig cfg, DatasetMeans means);

  const TrainConfig& config() const noexcept { return cfg_; }
  TrainState& state() noexcept { return state_; }
  const TrainState& state() const noexcept { return state_; }
  SgdState<float>& optimizer() noexcept { return sgd_; }
  const SgdState<float>& optimizer() const noexcept { return sgd_; }
  const DatasetMeans& means() const noexcept { return means_; }
  Network<float>& network() noexcept { return net_; }
  const Network<float>& network() const noexcept { return net_; }

  /// Runs epochs until `config().epochs` are complete, calling `on_epoch_end`
  /// after each one.
  void run(const std::function<void(Trainer&)>& on_epoch_end = {});
  /// One epoch; returns the mean training loss over its batches.
  double run_epoch();

  /// Training loss of every batch run by this object, in order.
  const std::vector<double>& batch_losses() const noexcept { return batch_losses_; }

 private:
  void validate_labels() const;
  void record_validation();

  Network<float>& net_;
  const ImageSet& train_;
  const ImageSet* val_;
  TrainConfig cfg_;
  DatasetMeans means_;
  bool bilateral_;
  TrainState state_;
  SgdState<float> sgd_;
  std::vector<double> batch_losses_;
};

}  // namespace mpcnn
