#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

#include "hvc/geometry.hpp"

namespace hvc {

// Integer class id per pixel, row-major.
using LabelImage = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// 8-bit PNG, PPM (P6) or PGM (P5), chosen by extension. Grey images are
// expanded to three channels.
ImageBuffer read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageBuffer& img);

// Indexed masks: pixel value is the class id. PNG masks are written with a
// palette; palette and greyscale PNGs are both read as raw indices.
LabelImage read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelImage& labels);

bool is_image_file(const std::filesystem::path& path);

// Image files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

} /* namespace hvc */
