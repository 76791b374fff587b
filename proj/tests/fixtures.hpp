#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rngaudit/bitstream.hpp"
#include "rngaudit/sts.hpp"

namespace fixtures {

struct OracleRow {
  rngaudit::BitSequence seq;
  std::array<double, rngaudit::sts::kNumTests> p{};
};

/// Frozen p-values from tests/oracle/sts_reference.py.
inline std::vector<OracleRow> load_sts_oracle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<OracleRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string bits, hex, field;
    std::getline(ss, bits, ',');
    std::getline(ss, hex, ',');
    OracleRow row;
    row.seq = rngaudit::from_hex(hex, std::stoul(bits));
    for (auto& p : row.p) {
      std::getline(ss, field, ',');
      p = std::stod(field);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fixtures
