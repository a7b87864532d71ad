#ifndef SEGTRANSFER_IO_HPP
#define SEGTRANSFER_IO_HPP

#include <string>

#include "segtransfer/tensor.hpp"

namespace segtransfer {

/// Binary PNM readers and writers, 8-bit only (maxval 255). P6 maps to a
/// 3-channel image, P5 to a single channel; byte v becomes v / 255.
Tensor3 read_image_pnm(const std::string& path);
void write_image_pnm(const Tensor3& image, const std::string& path);

/// Label maps as P5 with the class index stored in the byte.
LabelMap read_labels_pgm(const std::string& path, int num_classes, int ignore_index = 255);
void write_labels_pgm(const LabelMap& labels, const std::string& path);

/// Full-precision tensor exchange used by the external-process model adapter:
/// one ASCII line "T3 <h> <w> <c>\n" followed by h*w*c native float64 values.
Tensor3 read_tensor_raw(const std::string& path);
void write_tensor_raw(const Tensor3& t, const std::string& path);

}  // namespace segtransfer

#endif  // SEGTRANSFER_IO_HPP
