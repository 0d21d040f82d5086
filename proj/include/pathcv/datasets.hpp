#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pathcv/random.hpp"
#include "pathcv/types.hpp"

namespace pathcv {

/// Dense tabular data with a train/test split over row indices.
///
/// For frisk data the feature columns are (ethnicity index, precinct index,
/// exposure N_ep) and the target is the stop count.
struct Dataset {
  RowMatrix features;
  Vector targets;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::map<std::string, std::string> metadata;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(features.cols()); }
  std::span<const double> row(std::size_t i) const {
    return row_span(features, static_cast<Eigen::Index>(i));
  }
};

/// libsvm sparse text ("label idx:val ..."), 1-based strictly increasing
/// indices. Width is the largest index seen; labels +1/-1 map to 1/0.
/// Every row is placed in the train split.
Dataset parse_libsvm(std::string_view text);

inline constexpr double kDefaultArrestScale = 15.0;

/// Header "eth,precinct,stops,arrests"; 3 ethnicity groups x 32 precincts.
/// Exposure N_ep = arrests / arrest_scale. No test split.
Dataset load_frisk_csv(std::string_view text, double arrest_scale = kDefaultArrestScale);

/// Header row plus 11 feature columns and a final quality column; ',' or ';'
/// separated, optional double quotes. Every row is placed in the train split.
Dataset load_redwine_csv(std::string_view text);

/// Random split: floor(train_fraction * N) rows for training.
void split_dataset(Dataset& data, double train_fraction, std::uint64_t seed);
/// Random disjoint subsets of the given sizes (e.g. 100/100 for full-batch BNN).
void split_dataset(Dataset& data, std::size_t train_size, std::size_t test_size, std::uint64_t seed);

/// Standardizes feature columns to zero mean / unit variance using
/// train-split statistics; recorded in metadata.
void standardize_features(Dataset& data);

std::string read_text_file(const std::string& path);

// Synthetic generators producing text in the loaders' formats.
std::string synthetic_libsvm(std::size_t rows, std::size_t width, std::uint64_t seed);
std::string synthetic_frisk_csv(std::uint64_t seed);
std::string synthetic_redwine_csv(std::size_t rows, std::uint64_t seed);

}  // namespace pathcv
