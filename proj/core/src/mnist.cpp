#include "fedrlr/mnist.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "fedrlr/errors.hpp"

namespace fedrlr::mnist {
namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw IngestError(path.string() + ": truncated IDX header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(path.string() + ": cannot open");
  return in;
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    std::ostringstream os;
    os << path.string() << ": magic 0x" << std::hex << got << ", expected 0x" << want;
    throw IngestError(os.str());
  }
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t bytes,
                                        const std::filesystem::path& path) {
  std::vector<unsigned char> buf(bytes);
  if (bytes > 0 && !in.read(reinterpret_cast<char*>(buf.data()),
                            static_cast<std::streamsize>(bytes))) {
    throw IngestError(path.string() + ": file shorter than its header declares");
  }
  return buf;
}

}  // namespace

Matrix read_images(const std::filesystem::path& path) {
  auto in = open_input(path);
  expect_magic(read_be32(in, path), kImageMagic, path);
  const std::uint32_t count = read_be32(in, path);
  const std::uint32_t rows = read_be32(in, path);
  const std::uint32_t cols = read_be32(in, path);
  const std::size_t pixels = std::size_t{rows} * cols;
  const auto buf = read_payload(in, pixels * count, path);
  Matrix out(static_cast<Index>(pixels), static_cast<Index>(count));
  for (std::size_t j = 0; j < count; ++j)
    for (std::size_t i = 0; i < pixels; ++i)
      out(static_cast<Index>(i), static_cast<Index>(j)) = buf[j * pixels + i] / 255.0;
  return out;
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  auto in = open_input(path);
  expect_magic(read_be32(in, path), kLabelMagic, path);
  const std::uint32_t count = read_be32(in, path);
  const auto buf = read_payload(in, count, path);
  return std::vector<int>(buf.begin(), buf.end());
}

Dataset load(const std::filesystem::path& images, const std::filesystem::path& labels,
             Index limit) {
  Dataset d;
  d.features = read_images(images);
  d.labels = read_labels(labels);
  if (static_cast<Index>(d.labels.size()) != d.features.cols()) {
    throw IngestError("image count " + std::to_string(d.features.cols()) +
                      " != label count " + std::to_string(d.labels.size()));
  }
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] > 9) {
      throw IngestError("label " + std::to_string(d.labels[i]) + " at index " + std::to_string(i) +
                        " is not a digit");
    }
  }
  if (limit > 0) {
    if (limit > d.size()) {
      throw IngestError("requested " + std::to_string(limit) + " samples, files hold " +
                        std::to_string(d.size()));
    }
    d.features.conservativeResize(Eigen::NoChange, limit);
    d.labels.resize(static_cast<std::size_t>(limit));
  }
  return d;
}

void write_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                  std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  if (pixels.size() != std::size_t{count} * rows * cols) {
    throw Error("write_images: pixel buffer does not match count*rows*cols");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError(path.string() + ": cannot open for writing");
  write_be32(out, kImageMagic);
  write_be32(out, count);
  write_be32(out, rows);
  write_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

void write_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError(path.string() + ": cannot open for writing");
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

}  // namespace fedrlr::mnist
