#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsod/core.hpp"

namespace wsod {

/// Malformed dataset record; the message names the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct SceneConfig {
  std::size_t num_classes = 3;
  std::size_t num_proposals = 20;
  std::size_t feature_dim = 16;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  std::size_t copies_per_object = 2;
  double extent = 100.0;
  double min_object_size = 15.0;
  double max_object_size = 45.0;
  /// Standard deviation of the jitter, as a fraction of the object size.
  double jitter = 0.15;
  double feature_noise = 0.15;
  std::uint64_t prototype_seed = 7;
  std::uint64_t seed = 0;
};

/// Throws ContractViolation naming the first bad field.
void validate(const SceneConfig& cfg);

/// Geometry is snapped to a 2^-10 grid so corner-form files round-trip exactly.
double snap_coordinate(double v);

/// Fixed random unit vectors, one per foreground class (index j-1).
std::vector<std::vector<double>> class_prototypes(const SceneConfig& cfg);

/// One image with index `image_index`; depends only on (cfg, image_index).
ImageSample generate_image(const SceneConfig& cfg, std::size_t image_index,
                           const std::vector<std::vector<double>>& prototypes);

/// n images with ids 0..n-1. Images are generated in parallel from
/// per-image streams, so the result does not depend on the thread count.
std::vector<ImageSample> generate_dataset(const SceneConfig& cfg, std::size_t n);

/// Serial reference for generate_dataset.
std::vector<ImageSample> generate_dataset_serial(const SceneConfig& cfg, std::size_t n);

/// Same images with ground truth dropped.
std::vector<ImageSample> to_weak(const std::vector<ImageSample>& dataset);

/// One JSON object per line; see data/dataset.schema.json.
void save_dataset(const std::vector<ImageSample>& dataset, const std::filesystem::path& path);
std::vector<ImageSample> load_dataset(const std::filesystem::path& path);

std::string dataset_to_jsonl(const std::vector<ImageSample>& dataset);
std::vector<ImageSample> dataset_from_jsonl(const std::string& text);

/// True box class of each proposal: class of the best-overlapping ground
/// truth if its IoU >= threshold, background otherwise.
std::vector<int> proposal_truth(const ImageSample& sample, double iou_threshold = 0.5);

}  // namespace wsod
