#include "genet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "genet/error.hpp"

namespace genet {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) {
    fail(ErrorCode::kFormat, std::string("truncated IDX ") + what + " header");
  }
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0f), 0L, 255L));
}

}  // namespace

Tensor Dataset::batch_images(std::span<const std::size_t> indices) const {
  const std::size_t each = image_numel();
  std::vector<float> out(indices.size() * each);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(indices[i] * each), each,
                out.begin() + static_cast<std::ptrdiff_t>(i * each));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  return Tensor(std::move(shape), std::move(out));
}

std::vector<std::int32_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::int32_t> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels[indices[i]];
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  if (count == 0 || count >= size()) return *this;
  Dataset out = *this;
  out.images.resize(count * image_numel());
  out.labels.resize(count);
  if (!out.coarse_labels.empty()) out.coarse_labels.resize(count);
  return out;
}

void Dataset::validate() const {
  if (labels.empty()) fail(ErrorCode::kFormat, "dataset is empty");
  if (image_shape.size() != 3) fail(ErrorCode::kFormat, "image shape must be {C,H,W}");
  if (images.size() != labels.size() * image_numel()) {
    fail(ErrorCode::kFormat, "image buffer does not match label count");
  }
  for (std::int32_t y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      fail(ErrorCode::kFormat, "label " + std::to_string(y) + " outside [0," +
                                   std::to_string(num_classes) + ")");
    }
  }
}

void normalize(DatasetPair& pair) {
  Dataset& train = pair.train;
  train.validate();
  const std::size_t channels = train.image_shape[0];
  const std::size_t plane = train.image_shape[1] * train.image_shape[2];
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  for (std::size_t n = 0; n < train.size(); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float* p = train.images.data() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum[c] += p[i];
    }
  }
  const double count = static_cast<double>(train.size() * plane);
  std::vector<float> mean(channels), stddev(channels);
  for (std::size_t c = 0; c < channels; ++c) mean[c] = static_cast<float>(sum[c] / count);
  for (std::size_t n = 0; n < train.size(); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float* p = train.images.data() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - static_cast<double>(mean[c]);
        sq[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    const double sd = std::sqrt(sq[c] / count);
    stddev[c] = static_cast<float>(sd > 1e-12 ? sd : 1.0);
  }
  for (Dataset* d : {&pair.train, &pair.val}) {
    if (d->image_shape != train.image_shape) {
      fail(ErrorCode::kFormat, "train/val image shapes differ: " + shape_str(train.image_shape) +
                                   " vs " + shape_str(d->image_shape));
    }
    for (std::size_t n = 0; n < d->size(); ++n) {
      for (std::size_t c = 0; c < channels; ++c) {
        float* p = d->images.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean[c]) / stddev[c];
      }
    }
    d->norm_mean = mean;
    d->norm_std = stddev;
  }
}

Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, std::size_t num_classes) {
  const std::uint32_t image_magic = read_be32(image_bytes, 0, "image");
  if (image_magic != kIdxImageMagic) {
    fail(ErrorCode::kFormat, "bad IDX image magic " + hex32(image_magic) + " (expected " +
                                 hex32(kIdxImageMagic) + ")");
  }
  const std::uint32_t label_magic = read_be32(label_bytes, 0, "label");
  if (label_magic != kIdxLabelMagic) {
    fail(ErrorCode::kFormat, "bad IDX label magic " + hex32(label_magic) + " (expected " +
                                 hex32(kIdxLabelMagic) + ")");
  }
  const std::size_t count = read_be32(image_bytes, 4, "image");
  const std::size_t rows = read_be32(image_bytes, 8, "image");
  const std::size_t cols = read_be32(image_bytes, 12, "image");
  const std::size_t label_count = read_be32(label_bytes, 4, "label");
  if (count != label_count) {
    fail(ErrorCode::kFormat, "IDX image/label count mismatch: " + std::to_string(count) +
                                 " images, " + std::to_string(label_count) + " labels");
  }
  if (count == 0 || rows == 0 || cols == 0) fail(ErrorCode::kFormat, "IDX file has zero extent");
  const std::size_t pixels = count * rows * cols;
  if (image_bytes.size() != 16 + pixels) {
    fail(ErrorCode::kFormat, "truncated IDX image data: expected " + std::to_string(16 + pixels) +
                                 " bytes, got " + std::to_string(image_bytes.size()));
  }
  if (label_bytes.size() != 8 + count) {
    fail(ErrorCode::kFormat, "truncated IDX label data: expected " + std::to_string(8 + count) +
                                 " bytes, got " + std::to_string(label_bytes.size()));
  }
  Dataset d;
  d.image_shape = {1, rows, cols};
  d.num_classes = num_classes;
  d.images.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) d.images[i] = image_bytes[16 + i] / 255.0f;
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) d.labels[i] = label_bytes[8 + i];
  d.validate();
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t num_classes) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (images.empty()) fail(ErrorCode::kFormat, "truncated IDX file '" + images_path + "' (empty)");
  if (labels.empty()) fail(ErrorCode::kFormat, "truncated IDX file '" + labels_path + "' (empty)");
  return parse_idx(images, labels, num_classes);
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& data) {
  if (data.image_shape.size() != 3 || data.image_shape[0] != 1) {
    fail(ErrorCode::kFormat, "IDX images must be single-channel");
  }
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  put_be32(out, static_cast<std::uint32_t>(data.image_shape[1]));
  put_be32(out, static_cast<std::uint32_t>(data.image_shape[2]));
  for (float v : data.images) out.push_back(to_byte(v));
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& data) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  for (std::int32_t y : data.labels) out.push_back(static_cast<std::uint8_t>(y));
  return out;
}

std::size_t cifar_record_size(CifarVariant variant) {
  return (variant == CifarVariant::k10 ? 1 : 2) + 3 * 32 * 32;
}

Dataset parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarVariant variant) {
  const std::size_t record = cifar_record_size(variant);
  if (bytes.empty() || bytes.size() % record != 0) {
    fail(ErrorCode::kFormat, "CIFAR binary length " + std::to_string(bytes.size()) +
                                 " is not a positive multiple of the record size " +
                                 std::to_string(record));
  }
  const std::size_t count = bytes.size() / record;
  const std::size_t header = variant == CifarVariant::k10 ? 1 : 2;
  Dataset d;
  d.image_shape = {3, 32, 32};
  d.num_classes = variant == CifarVariant::k10 ? 10 : 100;
  d.images.resize(count * 3072);
  d.labels.resize(count);
  if (variant == CifarVariant::k100) d.coarse_labels.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::uint8_t* r = bytes.data() + n * record;
    if (variant == CifarVariant::k100) d.coarse_labels[n] = r[0];
    d.labels[n] = r[header - 1];
    for (std::size_t i = 0; i < 3072; ++i) d.images[n * 3072 + i] = r[header + i] / 255.0f;
  }
  d.validate();
  return d;
}

Dataset load_cifar_binary(const std::vector<std::string>& paths, CifarVariant variant) {
  if (paths.empty()) fail(ErrorCode::kArgument, "no CIFAR files given");
  std::vector<std::uint8_t> all;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.size() % cifar_record_size(variant) != 0) {
      fail(ErrorCode::kFormat, "'" + path + "' length " + std::to_string(bytes.size()) +
                                   " is not a multiple of the record size " +
                                   std::to_string(cifar_record_size(variant)));
    }
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return parse_cifar_binary(all, variant);
}

std::vector<std::uint8_t> encode_cifar_binary(const Dataset& data, CifarVariant variant) {
  if (data.image_shape != Shape{3, 32, 32}) {
    fail(ErrorCode::kFormat, "CIFAR records need 3x32x32 images, got " + shape_str(data.image_shape));
  }
  std::vector<std::uint8_t> out;
  out.reserve(data.size() * cifar_record_size(variant));
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (variant == CifarVariant::k100) {
      out.push_back(static_cast<std::uint8_t>(data.coarse_labels.empty() ? 0 : data.coarse_labels[n]));
    }
    out.push_back(static_cast<std::uint8_t>(data.labels[n]));
    for (std::size_t i = 0; i < 3072; ++i) out.push_back(to_byte(data.images[n * 3072 + i]));
  }
  return out;
}

DatasetPair synth_blobs(const SynthSpec& spec) {
  const std::size_t dims = shape_numel(spec.image_shape);
  if (spec.image_shape.size() != 3) fail(ErrorCode::kArgument, "synthetic image shape must be {C,H,W}");
  if (spec.num_classes < 2 || spec.num_classes > dims) {
    fail(ErrorCode::kArgument, "synthetic data needs 2 <= classes <= pixels per image");
  }
  if (spec.separation < 0.0) fail(ErrorCode::kArgument, "separation must be >= 0");
  Rng rng(spec.seed);
  // Orthonormal class directions by Gram-Schmidt on Gaussian draws.
  std::vector<std::vector<double>> dirs;
  while (dirs.size() < spec.num_classes) {
    std::vector<double> v(dims);
    for (auto& x : v) x = rng.normal();
    for (const auto& d : dirs) {
      const double dot = std::inner_product(v.begin(), v.end(), d.begin(), 0.0);
      for (std::size_t i = 0; i < dims; ++i) v[i] -= dot * d[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    dirs.push_back(std::move(v));
  }
  // Orthonormal means scaled by s/sqrt(2) are pairwise s apart.
  const double radius = spec.separation / std::sqrt(2.0);
  auto make_split = [&](std::size_t per_class, Split split) {
    Dataset d;
    d.image_shape = spec.image_shape;
    d.num_classes = spec.num_classes;
    d.split = split;
    d.images.reserve(per_class * spec.num_classes * dims);
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t c = 0; c < spec.num_classes; ++c) {
        for (std::size_t k = 0; k < dims; ++k) {
          d.images.push_back(static_cast<float>(radius * dirs[c][k] + rng.normal()));
        }
        d.labels.push_back(static_cast<std::int32_t>(c));
      }
    }
    return d;
  };
  DatasetPair pair;
  pair.train = make_split(spec.per_class, Split::kTrain);
  pair.val = make_split(spec.val_per_class, Split::kVal);
  return pair;
}

std::vector<std::uint8_t> export_synthetic_cifar10(const Dataset& data) {
  if (data.num_classes > 10) fail(ErrorCode::kFormat, "CIFAR-10 layout holds at most 10 classes");
  Dataset scaled = data;
  for (auto& v : scaled.images) v = (128.0f + 32.0f * v) / 255.0f;
  return encode_cifar_binary(scaled, CifarVariant::k10);
}

std::size_t BatchPlan::num_batches() const {
  const std::size_t n = permutation.size();
  return drop_last ? n / batch_size : (n + batch_size - 1) / batch_size;
}

std::span<const std::size_t> BatchPlan::batch(std::size_t index) const {
  const std::size_t begin = index * batch_size;
  const std::size_t end = std::min(begin + batch_size, permutation.size());
  return std::span<const std::size_t>(permutation).subspan(begin, end - begin);
}

BatchPlan make_batch_plan(std::size_t n, std::size_t batch_size, bool drop_last, Rng* rng) {
  if (batch_size == 0) fail(ErrorCode::kArgument, "batch size must be positive");
  BatchPlan plan{batch_size, drop_last, std::vector<std::size_t>(n)};
  std::iota(plan.permutation.begin(), plan.permutation.end(), std::size_t{0});
  if (rng != nullptr) {
    for (std::size_t i = n; i > 1; --i) {
      std::swap(plan.permutation[i - 1], plan.permutation[rng->uniform_int(i)]);
    }
  }
  return plan;
}

std::string_view to_string(AugmentPolicy policy) {
  return policy == AugmentPolicy::kNone ? "none" : "crop_flip";
}

AugmentPolicy parse_augment_policy(std::string_view text) {
  if (text == "none") return AugmentPolicy::kNone;
  if (text == "crop_flip") return AugmentPolicy::kCropFlip;
  fail(ErrorCode::kConfig, "unknown augmentation policy '" + std::string(text) +
                               "' (expected none or crop_flip)");
}

void crop_flip_image(std::span<const float> src, std::span<float> dst, const Shape& image_shape,
                     std::size_t pad, std::size_t dy, std::size_t dx, bool flip) {
  const std::size_t channels = image_shape[0], h = image_shape[1], w = image_shape[2];
  if (dy > 2 * pad || dx > 2 * pad) fail(ErrorCode::kArgument, "crop offset outside padded image");
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const auto sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(pad);
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t out_x = flip ? w - 1 - x : x;
        const auto sx = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(pad);
        const bool inside = sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                            sx < static_cast<std::ptrdiff_t>(w);
        dst[(c * h + y) * w + out_x] =
            inside ? src[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)]
                   : 0.0f;
      }
    }
  }
}

void augment(Tensor& batch, AugmentPolicy policy, Rng& rng) {
  if (policy == AugmentPolicy::kNone) return;
  if (batch.rank() != 4) fail(ErrorCode::kShape, "augment expects an NCHW batch");
  const Shape image_shape{batch.dim(1), batch.dim(2), batch.dim(3)};
  const std::size_t each = shape_numel(image_shape);
  auto values = batch.mutable_data();
  std::vector<float> scratch(each);
  for (std::size_t n = 0; n < batch.dim(0); ++n) {
    const std::size_t dy = rng.uniform_int(2 * kCropPadding + 1);
    const std::size_t dx = rng.uniform_int(2 * kCropPadding + 1);
    const bool flip = rng.bernoulli(0.5);
    auto image = values.subspan(n * each, each);
    std::copy(image.begin(), image.end(), scratch.begin());
    crop_flip_image(scratch, image, image_shape, kCropPadding, dy, dx, flip);
  }
}

}  // namespace genet
