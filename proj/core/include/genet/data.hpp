#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genet/rng.hpp"
#include "genet/tensor.hpp"

namespace genet {

enum class Split { kTrain, kVal };

// Images in NCHW order. Loaders produce pixel values in [0, 1]; normalize()
// then standardises each channel with statistics taken from the train split.
struct Dataset {
  Shape image_shape;  // {C, H, W}
  std::vector<float> images;
  std::vector<std::int32_t> labels;
  std::vector<std::int32_t> coarse_labels;  // CIFAR-100 only
  std::size_t num_classes = 0;
  Split split = Split::kTrain;
  std::vector<float> norm_mean;  // empty until normalized
  std::vector<float> norm_std;

  std::size_t size() const { return labels.size(); }
  std::size_t image_numel() const { return shape_numel(image_shape); }
  bool normalized() const { return !norm_mean.empty(); }

  Tensor batch_images(std::span<const std::size_t> indices) const;
  std::vector<std::int32_t> batch_labels(std::span<const std::size_t> indices) const;
  // First `count` samples (all when count is 0 or larger than the set).
  Dataset head(std::size_t count) const;
  void validate() const;
};

struct DatasetPair {
  Dataset train;
  Dataset val;
};

// Standardises both splits per channel with the train split's mean and
// standard deviation; the statistics are recorded on both datasets.
void normalize(DatasetPair& pair);

// --- IDX (MNIST) --------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, std::size_t num_classes = 10);
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t num_classes = 10);
// Re-encodes an unnormalized single-channel dataset.
std::vector<std::uint8_t> encode_idx_images(const Dataset& data);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& data);

// --- CIFAR binary ---------------------------------------------------------------

enum class CifarVariant { k10, k100 };

// CIFAR-10 records are 1 label byte + 3072 pixel bytes (R, G, B planes of
// 32x32, row-major). CIFAR-100 records carry a coarse then a fine label byte;
// the fine label is used.
std::size_t cifar_record_size(CifarVariant variant);
Dataset parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarVariant variant);
Dataset load_cifar_binary(const std::vector<std::string>& paths, CifarVariant variant);
std::vector<std::uint8_t> encode_cifar_binary(const Dataset& data, CifarVariant variant);

// --- Synthetic ------------------------------------------------------------------

struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t per_class = 50;      // train samples per class
  std::size_t val_per_class = 20;  // val samples per class
  Shape image_shape{1, 8, 8};
  double separation = 10.0;  // Euclidean distance between class means
  std::uint64_t seed = 0;
};

// Class-conditional Gaussian images: class means lie on mutually orthogonal
// directions scaled so every pair of means is `separation` apart; each pixel
// carries unit-variance noise. Values are not confined to [0, 1].
DatasetPair synth_blobs(const SynthSpec& spec);

// Quantises a synthetic dataset to CIFAR-10 bytes via clamp(round(128 + 32 v)).
// Requires 3x32x32 images and at most 10 classes.
std::vector<std::uint8_t> export_synthetic_cifar10(const Dataset& data);

// --- Batching and augmentation ----------------------------------------------------

struct BatchPlan {
  std::size_t batch_size = 1;
  bool drop_last = false;
  std::vector<std::size_t> permutation;

  std::size_t num_batches() const;
  std::span<const std::size_t> batch(std::size_t index) const;
};

// Seeded permutation of [0, n) when rng is given, identity order otherwise.
BatchPlan make_batch_plan(std::size_t n, std::size_t batch_size, bool drop_last, Rng* rng);

enum class AugmentPolicy { kNone, kCropFlip };

std::string_view to_string(AugmentPolicy policy);
AugmentPolicy parse_augment_policy(std::string_view text);

inline constexpr std::size_t kCropPadding = 4;

// One image [C, H, W]: zero-pad by `pad`, take the HxW window whose top-left
// corner is (dy, dx) in padded coordinates, optionally mirror horizontally.
void crop_flip_image(std::span<const float> src, std::span<float> dst, const Shape& image_shape,
                     std::size_t pad, std::size_t dy, std::size_t dx, bool flip);

// Applies the policy to every image of an NCHW batch in place.
void augment(Tensor& batch, AugmentPolicy policy, Rng& rng);

}  // namespace genet
