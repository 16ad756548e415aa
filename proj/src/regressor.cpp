#include "evcoord/regressor.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <ostream>

#include "binary_io.hpp"
#include "evcoord/errors.hpp"
#include "evcoord/util.hpp"

namespace evcoord {

std::size_t ExactTable::RowHash::operator()(const std::vector<double>& row) const {
  std::uint64_t h = row.size();
  for (double v : row) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    h = mix_seed(h, bits);
  }
  return static_cast<std::size_t>(h);
}

void ExactTable::fit(const FeatureMatrix& x, std::span<const double> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw std::invalid_argument("ExactTable::fit: row count does not match targets");
  table_.clear();
  std::unordered_map<std::vector<double>, std::pair<double, std::size_t>, RowHash> sums;
  std::vector<double> key(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::copy(x.row(r).data(), x.row(r).data() + x.cols(), key.begin());
    auto& [sum, n] = sums[key];
    sum += y[static_cast<std::size_t>(r)];
    ++n;
  }
  table_.reserve(sums.size());
  for (auto& [k, acc] : sums)
    table_.emplace(k, acc.second == 1 ? acc.first : acc.first / static_cast<double>(acc.second));
}

void ExactTable::predict(const FeatureMatrix& x, std::span<double> out) const {
  if (static_cast<std::size_t>(x.rows()) != out.size())
    throw std::invalid_argument("ExactTable::predict: output size mismatch");
  std::vector<double> key(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::copy(x.row(r).data(), x.row(r).data() + x.cols(), key.begin());
    const auto it = table_.find(key);
    out[static_cast<std::size_t>(r)] = it == table_.end() ? unseen_value_ : it->second;
  }
}

void ExactTable::save(std::ostream& out) const {
  out.write(binary::kRegressorMagic.data(), static_cast<std::streamsize>(binary::kRegressorMagic.size()));
  binary::write_string(out, kind());
  binary::write<double>(out, unseen_value_);
  // Sorted so identical tables serialize to identical bytes.
  std::vector<const std::pair<const std::vector<double>, double>*> rows;
  rows.reserve(table_.size());
  for (const auto& kv : table_) rows.push_back(&kv);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
  const std::uint32_t dim = rows.empty() ? 0 : static_cast<std::uint32_t>(rows.front()->first.size());
  binary::write<std::uint64_t>(out, rows.size());
  binary::write<std::uint32_t>(out, dim);
  for (const auto* kv : rows) {
    for (double v : kv->first) binary::write<double>(out, v);
    binary::write<double>(out, kv->second);
  }
}

std::unique_ptr<ExactTable> ExactTable::load_body(std::istream& in) {
  auto table = std::make_unique<ExactTable>(binary::read<double>(in));
  const auto rows = binary::read<std::uint64_t>(in);
  const auto dim = binary::read<std::uint32_t>(in);
  table->table_.reserve(static_cast<std::size_t>(rows));
  std::vector<double> key(dim);
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (auto& v : key) v = binary::read<double>(in);
    table->table_[key] = binary::read<double>(in);
  }
  return table;
}

std::unique_ptr<Regressor> load_regressor(std::istream& in) {
  binary::expect_magic(in, binary::kRegressorMagic, "regressor");
  const std::string kind = binary::read_string(in);
  if (kind == "exact_table") return ExactTable::load_body(in);
  if (kind == "mlp") return Mlp::load_body(in);
  throw ParseError("unknown regressor kind '" + kind + "'", 0);
}

}  // namespace evcoord
