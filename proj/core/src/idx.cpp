#include "flsim/idx.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace flsim {
namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_idx: cannot open " + path);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

[[noreturn]] void reject(const std::string& path, std::size_t offset, const std::string& why) {
  throw std::runtime_error("load_idx: " + path + " at byte " + std::to_string(offset) + ": " +
                           why);
}

std::uint32_t read_be_u32(const std::vector<unsigned char>& buf, const std::string& path,
                          std::size_t offset) {
  if (offset + 4 > buf.size()) reject(path, offset, "truncated header");
  return (static_cast<std::uint32_t>(buf[offset]) << 24) |
         (static_cast<std::uint32_t>(buf[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(buf[offset + 2]) << 8) |
         static_cast<std::uint32_t>(buf[offset + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int num_classes_override) {
  const std::vector<unsigned char> img = read_file(images_path);
  const std::vector<unsigned char> lab = read_file(labels_path);

  std::uint32_t img_magic = read_be_u32(img, images_path, 0);
  if (img_magic != 0x00000803u) reject(images_path, 0, "bad magic (expected 0x00000803)");
  std::uint32_t n_img = read_be_u32(img, images_path, 4);
  std::uint32_t rows = read_be_u32(img, images_path, 8);
  std::uint32_t cols = read_be_u32(img, images_path, 12);
  if (n_img > 0 && (rows == 0 || cols == 0)) reject(images_path, 8, "zero image dimensions");
  std::size_t expected = 16 + static_cast<std::size_t>(n_img) * rows * cols;
  if (img.size() < expected) reject(images_path, img.size(), "truncated pixel data");
  if (img.size() > expected) reject(images_path, expected, "trailing bytes after pixel data");

  std::uint32_t lab_magic = read_be_u32(lab, labels_path, 0);
  if (lab_magic != 0x00000801u) reject(labels_path, 0, "bad magic (expected 0x00000801)");
  std::uint32_t n_lab = read_be_u32(lab, labels_path, 4);
  if (n_lab != n_img) {
    reject(labels_path, 4,
           "label count " + std::to_string(n_lab) + " does not match image count " +
               std::to_string(n_img));
  }
  if (lab.size() < 8 + n_lab) reject(labels_path, lab.size(), "truncated label data");
  if (lab.size() > 8 + n_lab) reject(labels_path, 8 + n_lab, "trailing bytes after label data");

  Dataset ds;
  ds.input_shape = {1, static_cast<int>(rows == 0 ? 1 : rows),
                    static_cast<int>(cols == 0 ? 1 : cols)};
  int max_label = -1;
  ds.examples.reserve(n_img);
  const std::size_t px = static_cast<std::size_t>(rows) * cols;
  for (std::uint32_t i = 0; i < n_img; ++i) {
    LabeledExample ex;
    ex.label = static_cast<int>(lab[8 + i]);
    max_label = std::max(max_label, ex.label);
    ex.input.shape = ds.input_shape;
    ex.input.values.resize(px);
    const unsigned char* p = img.data() + 16 + static_cast<std::size_t>(i) * px;
    for (std::size_t j = 0; j < px; ++j) {
      ex.input.values[j] = static_cast<float>(p[j]) / 255.0f;
    }
    ds.examples.push_back(std::move(ex));
  }

  ds.num_classes = num_classes_override > 0 ? num_classes_override : max_label + 1;
  if (num_classes_override > 0 && max_label >= num_classes_override) {
    reject(labels_path, 8, "label " + std::to_string(max_label) + " outside declared class count");
  }
  return ds;
}

}  // namespace flsim
