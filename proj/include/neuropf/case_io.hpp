#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "neuropf/types.hpp"

namespace neuropf {

enum class BusType { PQ = 1, PV = 2, Slack = 3 };

std::string_view to_string(BusType type);

struct Bus {
  int id = 0;
  BusType bus_type = BusType::PQ;
  double Pd = 0.0;  // MW
  double Qd = 0.0;  // MVAr
  double Gs = 0.0;  // MW at 1.0 p.u.
  double Bs = 0.0;  // MVAr at 1.0 p.u.
  double Vm = 1.0;  // p.u.
  double Va = 0.0;  // degrees
  double base_kV = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;
  double tap = 0.0;    // 0 means nominal ratio
  double shift = 0.0;  // degrees
  bool status = true;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  int bus = 0;
  double Pg = 0.0;
  double Qg = 0.0;
  double Vg = 1.0;
  bool status = true;

  bool operator==(const Generator&) const = default;
};

/// Bus classification in internal (0-based, file-order) indexing. Every index
/// list is sorted ascending.
struct BusSets {
  std::size_t slack_idx = 0;
  std::vector<std::size_t> pv_idxs;
  std::vector<std::size_t> pq_idxs;
  std::vector<std::size_t> non_slack;

  bool operator==(const BusSets&) const = default;
};

struct CaseData {
  std::string name;
  double base_MVA = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> gens;
  BusSets bus_sets;

  std::size_t bus_count() const { return buses.size(); }
  /// Internal index of an external bus number; throws ValidationError if absent.
  std::size_t index_of(int bus_id) const;
  /// Length of the perturbation vector, 2|PQ| + |PV|.
  std::size_t input_dim() const { return 2 * bus_sets.pq_idxs.size() + bus_sets.pv_idxs.size(); }
  /// Length of the raw network output, |PV| + 2|PQ|.
  std::size_t output_dim() const { return bus_sets.pv_idxs.size() + 2 * bus_sets.pq_idxs.size(); }
  /// Regulated magnitude at bus `idx`: first in-service generator's Vg, else bus Vm.
  double voltage_setpoint(std::size_t idx) const;
  /// Slack angle in radians.
  double slack_angle() const;
  bool is_pq(std::size_t idx) const { return buses[idx].bus_type == BusType::PQ; }

  bool operator==(const CaseData&) const = default;
};

/// Parses a MATPOWER case file restricted to literal matrix blocks.
/// Out-of-service branches and generators are dropped; PV buses left without an
/// in-service generator become PQ.
CaseData parse_matpower_case(std::string_view text, std::string fallback_name = "case");

/// Parses the native JSON interchange format. Violations raise SchemaError.
CaseData parse_native_case(std::string_view text);

/// Serializes to the native JSON format (pretty printed, stable key order).
std::string export_native_case(const CaseData& data);

/// Loads `.m` (MATPOWER) or `.json` (native) from disk.
CaseData load_case(const std::filesystem::path& path);

/// Validates invariants, applies element filtering and PV demotion, and fills
/// `bus_sets`. Both parsers finish with this; exposed for hand-built cases.
void finalize_case(CaseData& data);

/// Specified injections in p.u.: (sum of generation - load) / base_MVA. Q entries
/// at slack and PV buses are computed but only PQ entries are constrained.
PowerInjection base_injections(const CaseData& data);

}  // namespace neuropf
