#pragma once

// MNIST IDX files: big-endian header, magic 0x00000803 for images
// (count, rows, cols) and 0x00000801 for labels (count), then raw bytes.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fedrlr/objective.hpp"

namespace fedrlr::mnist {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

/// Pixels flattened row-major into columns of length rows*cols, scaled to
/// [0, 1]. Throws IngestError on a missing/short file or a bad header.
Matrix read_images(const std::filesystem::path& path);
std::vector<int> read_labels(const std::filesystem::path& path);

/// Images and labels paired into a classification set; rejects count
/// mismatches. `limit` > 0 keeps only the first `limit` samples.
Dataset load(const std::filesystem::path& images, const std::filesystem::path& labels,
             Index limit = 0);

void write_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                  std::uint32_t count, std::uint32_t rows, std::uint32_t cols);
void write_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

}  // namespace fedrlr::mnist
