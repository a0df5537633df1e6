#pragma once

#include <string>
#include <vector>

#include "aada/data.hpp"
#include "aada/tensor.hpp"

namespace aada::io {

// npy v1.0 containers; float64 for rasters (lossless round trip), uint8 for
// label maps.

void write_npy(const std::string& path, const std::vector<int>& shape, const double* data);
Tensor read_npy(const std::string& path);
void write_npy_labels(const std::string& path, const LabelMap& labels);
LabelMap read_npy_labels(const std::string& path);

/// Dataset directory: `<tile>.img.npy` rasters stored H x W x N, paired
/// `<tile>.lbl.npy` label maps, plus meta.json with gsd, class_count,
/// channel_names and height_channel.
void save_dataset(const std::string& dir, const DomainDataset& dataset,
                  const std::vector<std::string>& channel_names = {});

DomainDataset load_dataset(const std::string& dir);

/// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace aada::io
