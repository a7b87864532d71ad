#include "segtransfer/io.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace segtransfer {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// Reads the next header token, skipping whitespace and '#' comment lines.
std::string next_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
};

PnmHeader read_header(std::istream& in, const std::string& path) {
  PnmHeader h;
  h.magic = next_token(in);
  if (h.magic != "P5" && h.magic != "P6") fail(path, "not a binary PGM/PPM file");
  try {
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) fail(path, "only maxval 255 is supported");
  } catch (const std::logic_error&) {
    fail(path, "malformed header");
  }
  if (h.width < 1 || h.height < 1) fail(path, "non-positive image extents");
  return h;
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t n,
                                       const std::string& path) {
  std::vector<std::uint8_t> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) fail(path, "truncated pixel data");
  return bytes;
}

}  // namespace

Tensor3 read_image_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const PnmHeader h = read_header(in, path);
  const int channels = h.magic == "P6" ? 3 : 1;
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * channels;
  const auto bytes = read_payload(in, n, path);
  Tensor3 t(h.height, h.width, channels);
  for (std::size_t i = 0; i < n; ++i) t.data[i] = bytes[i] / 255.0;
  return t;
}

void write_image_pnm(const Tensor3& image, const std::string& path) {
  validate_image(image);
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument(path + ": only 1- or 3-channel images can be written");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << (image.channels == 3 ? "P6" : "P5") << "\n"
      << image.width << " " << image.height << "\n255\n";
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const double v = image.data[i] * 255.0;
    bytes[i] = static_cast<std::uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v + 0.5));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(path, "write failed");
}

LabelMap read_labels_pgm(const std::string& path, int num_classes, int ignore_index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const PnmHeader h = read_header(in, path);
  if (h.magic != "P5") fail(path, "labels must be single-channel PGM");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  const auto bytes = read_payload(in, n, path);
  LabelMap labels(h.height, h.width, num_classes, ignore_index);
  for (std::size_t i = 0; i < n; ++i) labels.data[i] = bytes[i];
  validate_labels(labels, h.height, h.width);
  return labels;
}

void write_labels_pgm(const LabelMap& labels, const std::string& path) {
  validate_labels(labels, labels.height, labels.width);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << labels.width << " " << labels.height << "\n255\n";
  std::vector<std::uint8_t> bytes(labels.data.size());
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    const int v = labels.data[i];
    if (v < 0 || v > 255) fail(path, "label value does not fit in a byte");
    bytes[i] = static_cast<std::uint8_t>(v);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(path, "write failed");
}

Tensor3 read_tensor_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string line;
  if (!std::getline(in, line)) fail(path, "missing header");
  std::istringstream hdr(line);
  std::string magic;
  int h = 0, w = 0, c = 0;
  hdr >> magic >> h >> w >> c;
  if (!hdr || magic != "T3" || h < 1 || w < 1 || c < 1) fail(path, "malformed T3 header");
  Tensor3 t(h, w, c);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != t.data.size() * sizeof(double)) {
    fail(path, "truncated tensor data");
  }
  return t;
}

void write_tensor_raw(const Tensor3& t, const std::string& path) {
  if (t.height < 1 || t.width < 1 || t.channels < 1) {
    throw std::invalid_argument(path + ": cannot write an empty tensor");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "T3 " << t.height << " " << t.width << " " << t.channels << "\n";
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) fail(path, "write failed");
}

}  // namespace segtransfer
