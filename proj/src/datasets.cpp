#include "pathcv/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "pathcv/errors.hpp"

namespace pathcv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find(sep, start);
    std::string_view field = trim(line.substr(start, end == std::string_view::npos ? end : end - start));
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') {
      field = field.substr(1, field.size() - 2);
    }
    out.push_back(field);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_index(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Dataset parse_libsvm(std::string_view text) {
  struct Row {
    double label;
    std::vector<std::pair<std::size_t, double>> entries;
  };
  std::vector<Row> rows;
  std::size_t width = 0;
  std::size_t line_no = 0;
  for (std::string_view raw : split_lines(text)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    std::istringstream tokens{std::string(line)};
    std::string tok;
    tokens >> tok;
    double label = 0.0;
    if (!parse_double(tok, label) || !(label == 1.0 || label == -1.0 || label == 0.0)) {
      throw ParseError(line_no, "invalid label '" + tok + "'");
    }
    Row row{label > 0.0 ? 1.0 : 0.0, {}};
    std::size_t previous = 0;
    while (tokens >> tok) {
      auto colon = tok.find(':');
      std::size_t index = 0;
      double value = 0.0;
      if (colon == std::string::npos || !parse_index(std::string_view(tok).substr(0, colon), index) ||
          !parse_double(std::string_view(tok).substr(colon + 1), value)) {
        throw ParseError(line_no, "malformed feature token '" + tok + "'");
      }
      if (index == 0) throw ParseError(line_no, "feature indices are 1-based");
      if (index <= previous) throw ParseError(line_no, "feature indices must be strictly increasing");
      previous = index;
      width = std::max(width, index);
      row.entries.emplace_back(index, value);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(1, "empty libsvm input");

  Dataset data;
  data.features = RowMatrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  data.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.targets[static_cast<Eigen::Index>(i)] = rows[i].label;
    for (auto [index, value] : rows[i].entries) {
      data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(index - 1)) = value;
    }
  }
  data.train.resize(rows.size());
  std::iota(data.train.begin(), data.train.end(), std::size_t{0});
  data.metadata["format"] = "libsvm";
  data.metadata["width"] = std::to_string(width);
  return data;
}

Dataset load_frisk_csv(std::string_view text, double arrest_scale) {
  constexpr std::size_t kEthnicities = 3;
  constexpr std::size_t kPrecincts = 32;
  if (!(arrest_scale > 0.0)) throw std::invalid_argument("arrest scale must be positive");

  auto lines = split_lines(text);
  std::size_t line_no = 0;
  bool header_seen = false;
  std::unordered_map<std::string, std::size_t> eth_ids, precinct_ids;
  std::vector<std::array<double, 4>> records;  // eth, precinct, stops, arrests
  for (std::string_view raw : lines) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    auto fields = split_fields(line, ',');
    if (!header_seen) {
      if (fields.size() != 4 || fields[0] != "eth" || fields[1] != "precinct" || fields[2] != "stops" ||
          fields[3] != "arrests") {
        throw SchemaError("frisk header must be 'eth,precinct,stops,arrests'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) throw ParseError(line_no, "expected 4 fields");
    double stops = 0.0, arrests = 0.0;
    if (!parse_double(fields[2], stops) || stops < 0.0 || std::floor(stops) != stops) {
      throw ParseError(line_no, "stops must be a non-negative integer");
    }
    if (!parse_double(fields[3], arrests) || !(arrests > 0.0)) {
      throw ParseError(line_no, "arrests must be positive");
    }
    auto eth = eth_ids.try_emplace(std::string(fields[0]), eth_ids.size()).first->second;
    auto pre = precinct_ids.try_emplace(std::string(fields[1]), precinct_ids.size()).first->second;
    records.push_back({static_cast<double>(eth), static_cast<double>(pre), stops, arrests});
  }
  if (!header_seen) throw SchemaError("frisk csv is empty");
  if (records.size() != kEthnicities * kPrecincts) {
    throw SchemaError("frisk csv must have 96 data rows, got " + std::to_string(records.size()));
  }
  if (eth_ids.size() != kEthnicities || precinct_ids.size() != kPrecincts) {
    throw SchemaError("frisk csv must have 3 ethnicity groups and 32 precincts");
  }
  std::vector<int> seen(kEthnicities * kPrecincts, 0);
  for (const auto& r : records) {
    auto cell = static_cast<std::size_t>(r[0]) * kPrecincts + static_cast<std::size_t>(r[1]);
    if (seen[cell]++) throw SchemaError("duplicate (eth, precinct) pair in frisk csv");
  }

  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(records.size()), 3);
  data.targets.resize(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    data.features(r, 0) = records[i][0];
    data.features(r, 1) = records[i][1];
    data.features(r, 2) = records[i][3] / arrest_scale;
    data.targets[r] = records[i][2];
  }
  data.train.resize(records.size());
  std::iota(data.train.begin(), data.train.end(), std::size_t{0});
  data.metadata["format"] = "frisk";
  data.metadata["arrest_scale"] = std::to_string(arrest_scale);
  data.metadata["ethnicities"] = std::to_string(kEthnicities);
  data.metadata["precincts"] = std::to_string(kPrecincts);
  return data;
}

Dataset load_redwine_csv(std::string_view text) {
  constexpr std::size_t kColumns = 12;
  auto lines = split_lines(text);
  std::size_t line_no = 0;
  char sep = ',';
  bool header_seen = false;
  std::vector<std::vector<double>> rows;
  for (std::string_view raw : lines) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (!header_seen) {
      sep = line.find(';') != std::string_view::npos ? ';' : ',';
      if (split_fields(line, sep).size() != kColumns) {
        throw SchemaError("redwine csv must have 11 feature columns and a quality column");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_fields(line, sep);
    if (fields.size() != kColumns) throw ParseError(line_no, "expected 12 fields");
    std::vector<double> values(kColumns);
    for (std::size_t k = 0; k < kColumns; ++k) {
      if (!parse_double(fields[k], values[k])) {
        throw ParseError(line_no, "non-numeric field '" + std::string(fields[k]) + "'");
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw SchemaError("redwine csv has no data rows");

  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), kColumns - 1);
  data.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k + 1 < kColumns; ++k) data.features(r, static_cast<Eigen::Index>(k)) = rows[i][k];
    data.targets[r] = rows[i][kColumns - 1];
  }
  data.train.resize(rows.size());
  std::iota(data.train.begin(), data.train.end(), std::size_t{0});
  data.metadata["format"] = "redwine";
  return data;
}

void split_dataset(Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("train fraction must be in (0, 1]");
  }
  auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(data.rows())));
  split_dataset(data, n_train, data.rows() - n_train, seed);
  data.metadata["train_fraction"] = std::to_string(train_fraction);
}

void split_dataset(Dataset& data, std::size_t train_size, std::size_t test_size, std::uint64_t seed) {
  if (train_size == 0) throw std::invalid_argument("train split must be non-empty");
  if (train_size + test_size > data.rows()) throw std::invalid_argument("split larger than dataset");
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::split);
  std::shuffle(order.begin(), order.end(), rng);
  data.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_size));
  data.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_size),
                   order.begin() + static_cast<std::ptrdiff_t>(train_size + test_size));
  std::sort(data.train.begin(), data.train.end());
  std::sort(data.test.begin(), data.test.end());
  data.metadata["split_seed"] = std::to_string(seed);
}

void standardize_features(Dataset& data) {
  if (data.train.empty()) throw std::invalid_argument("standardize: empty train split");
  const double n = static_cast<double>(data.train.size());
  std::ostringstream means, scales;
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t i : data.train) mean += data.features(static_cast<Eigen::Index>(i), c);
    mean /= n;
    double var = 0.0;
    for (std::size_t i : data.train) {
      double d = data.features(static_cast<Eigen::Index>(i), c) - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / n);
    if (sd == 0.0) sd = 1.0;
    data.features.col(c) = (data.features.col(c).array() - mean) / sd;
    means << (c ? "," : "") << mean;
    scales << (c ? "," : "") << sd;
  }
  data.metadata["standardized"] = "train";
  data.metadata["feature_means"] = means.str();
  data.metadata["feature_scales"] = scales.str();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string synthetic_libsvm(std::size_t rows, std::size_t width, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::synthetic, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution active(0.1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> weights(width);
  for (double& w : weights) w = normal(rng);
  const double bias = -0.5;
  std::ostringstream out;
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<std::size_t> on;
    for (std::size_t k = 0; k < width; ++k) {
      // Row 0 always carries the last index so the parsed width is exact.
      if (active(rng) || (i == 0 && k + 1 == width)) on.push_back(k);
    }
    double eta = bias;
    for (std::size_t k : on) eta += weights[k];
    bool positive = unit(rng) < 1.0 / (1.0 + std::exp(-eta));
    out << (positive ? "+1" : "-1");
    for (std::size_t k : on) out << ' ' << (k + 1) << ":1";
    out << '\n';
  }
  return out.str();
}

std::string synthetic_frisk_csv(std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::synthetic, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> arrests_dist(20, 400);
  const double mu = 0.3;
  double alpha[3];
  for (double& a : alpha) a = 0.4 * normal(rng);
  std::ostringstream out;
  out << "eth,precinct,stops,arrests\n";
  std::vector<double> beta(32);
  for (double& b : beta) b = 0.6 * normal(rng);
  for (int e = 0; e < 3; ++e) {
    for (int p = 0; p < 32; ++p) {
      int arrests = arrests_dist(rng);
      double rate = std::exp(mu + alpha[e] + beta[static_cast<std::size_t>(p)]) * arrests / kDefaultArrestScale;
      std::poisson_distribution<int> poisson(rate);
      out << (e + 1) << ',' << (p + 1) << ',' << poisson(rng) << ',' << arrests << '\n';
    }
  }
  return out.str();
}

std::string synthetic_redwine_csv(std::size_t rows, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::synthetic, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Rough column locations/scales of the physico-chemical measurements.
  const double loc[11] = {8.3, 0.53, 0.27, 2.5, 0.087, 15.9, 46.5, 0.9967, 3.31, 0.66, 10.4};
  const double scale[11] = {1.7, 0.18, 0.19, 1.4, 0.047, 10.5, 32.9, 0.0019, 0.15, 0.17, 1.07};
  const double effect[11] = {0.05, -0.35, -0.05, 0.0, -0.1, 0.05, -0.1, -0.05, -0.05, 0.25, 0.45};
  std::ostringstream out;
  out << "fixed acidity,volatile acidity,citric acid,residual sugar,chlorides,"
         "free sulfur dioxide,total sulfur dioxide,density,pH,sulphates,alcohol,quality\n";
  out.precision(6);
  for (std::size_t i = 0; i < rows; ++i) {
    double signal = 0.0;
    for (int k = 0; k < 11; ++k) {
      double u = normal(rng);
      signal += effect[k] * u;
      out << loc[k] + scale[k] * u << ',';
    }
    double quality = std::round(5.6 + signal + 0.5 * normal(rng));
    out << std::clamp(quality, 3.0, 8.0) << '\n';
  }
  return out.str();
}

}  // namespace pathcv
