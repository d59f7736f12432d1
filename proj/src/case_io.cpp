#include "neuropf/case_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "neuropf/errors.hpp"

namespace neuropf {

using json = nlohmann::json;

std::string_view to_string(BusType type) {
  switch (type) {
    case BusType::PQ:
      return "PQ";
    case BusType::PV:
      return "PV";
    case BusType::Slack:
      return "Slack";
  }
  return "?";
}

std::size_t CaseData::index_of(int bus_id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == bus_id) return i;
  }
  throw ValidationError("unknown bus id " + std::to_string(bus_id));
}

double CaseData::voltage_setpoint(std::size_t idx) const {
  const int id = buses[idx].id;
  for (const auto& g : gens) {
    if (g.status && g.bus == id) return g.Vg;
  }
  return buses[idx].Vm;
}

double CaseData::slack_angle() const {
  return buses[bus_sets.slack_idx].Va * std::numbers::pi / 180.0;
}

// ---------------------------------------------------------------------------
// MATPOWER

namespace {

using Matrix = std::vector<std::vector<double>>;

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char c : text) {
    if (c == '\n') {
      in_comment = false;
      out.push_back(c);
    } else if (c == '%') {
      in_comment = true;
    } else if (!in_comment) {
      out.push_back(c);
    }
  }
  return out;
}

// Position just past "mpc.<field>" followed by optional spaces and '='.
std::optional<std::size_t> find_assignment(const std::string& text, std::string_view field) {
  const std::string key = "mpc." + std::string(field);
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t p = pos + key.size();
    const bool boundary_before = pos == 0 || !(std::isalnum(static_cast<unsigned char>(text[pos - 1])) || text[pos - 1] == '_');
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    if (boundary_before && p < text.size() && text[p] == '=') return p + 1;
    pos += key.size();
  }
  return std::nullopt;
}

double parse_number(std::string_view token, std::string_view block) {
  double value = 0.0;
  std::string tok(token);
  if (tok == "Inf" || tok == "inf") return HUGE_VAL;
  if (tok == "-Inf" || tok == "-inf") return -HUGE_VAL;
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("mpc." + std::string(block) + ": bad numeric token '" + tok + "'");
  }
  return value;
}

Matrix parse_block(const std::string& text, std::string_view block, std::size_t min_cols) {
  auto start = find_assignment(text, block);
  if (!start) throw ParseError("missing block mpc." + std::string(block));
  const std::size_t open = text.find('[', *start);
  const std::size_t close = text.find(']', *start);
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("mpc." + std::string(block) + ": expected literal matrix '[ ... ]'");
  }
  Matrix rows;
  std::vector<double> row;
  auto flush = [&] {
    if (row.empty()) return;
    if (row.size() < min_cols) {
      throw ParseError("mpc." + std::string(block) + ": row " + std::to_string(rows.size() + 1) +
                       " has " + std::to_string(row.size()) + " columns, need " +
                       std::to_string(min_cols));
    }
    rows.push_back(std::move(row));
    row.clear();
  };
  std::size_t i = open + 1;
  while (i < close) {
    const char c = text[i];
    if (c == ';' || c == '\n' || c == '\r') {
      flush();
      ++i;
    } else if (c == ' ' || c == '\t' || c == ',') {
      ++i;
    } else if (c == '.' && i + 2 < close && text[i + 1] == '.' && text[i + 2] == '.') {
      // line continuation
      i = text.find('\n', i);
      if (i == std::string::npos || i > close) i = close;
      else ++i;
    } else {
      std::size_t j = i;
      while (j < close && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != ';' && text[j] != ',') ++j;
      row.push_back(parse_number(std::string_view(text).substr(i, j - i), block));
      i = j;
    }
  }
  flush();
  return rows;
}

double parse_scalar(const std::string& text, std::string_view field) {
  auto start = find_assignment(text, field);
  if (!start) throw ParseError("missing block mpc." + std::string(field));
  const std::size_t semi = text.find_first_of(";\n", *start);
  std::string tok = text.substr(*start, semi == std::string::npos ? std::string::npos : semi - *start);
  tok.erase(0, tok.find_first_not_of(" \t"));
  tok.erase(tok.find_last_not_of(" \t\r") + 1);
  return parse_number(tok, field);
}

std::string function_name(std::string_view text) {
  const std::size_t pos = text.find("function");
  if (pos == std::string_view::npos) return {};
  const std::size_t eq = text.find('=', pos);
  const std::size_t eol = text.find('\n', pos);
  if (eq == std::string_view::npos || (eol != std::string_view::npos && eq > eol)) return {};
  std::string name(text.substr(eq + 1, (eol == std::string_view::npos ? text.size() : eol) - eq - 1));
  name.erase(0, name.find_first_not_of(" \t"));
  name.erase(name.find_last_not_of(" \t\r;") + 1);
  return name;
}

int as_int(double v, std::string_view what) {
  if (std::floor(v) != v) throw ParseError(std::string(what) + ": expected integer, got " + std::to_string(v));
  return static_cast<int>(v);
}

BusType bus_type_from_code(int code, int bus_id) {
  switch (code) {
    case 1:
      return BusType::PQ;
    case 2:
      return BusType::PV;
    case 3:
      return BusType::Slack;
    default:
      throw ValidationError("bus " + std::to_string(bus_id) + ": unsupported type code " + std::to_string(code));
  }
}

}  // namespace

CaseData parse_matpower_case(std::string_view raw, std::string fallback_name) {
  const std::string text = strip_comments(raw);
  CaseData data;
  data.name = function_name(raw);
  if (data.name.empty()) data.name = std::move(fallback_name);
  data.base_MVA = parse_scalar(text, "baseMVA");

  // bus = [BUS_I TYPE PD QD GS BS AREA VM VA BASEKV ...]
  for (const auto& r : parse_block(text, "bus", 10)) {
    Bus b;
    b.id = as_int(r[0], "mpc.bus BUS_I");
    b.bus_type = bus_type_from_code(as_int(r[1], "mpc.bus TYPE"), b.id);
    b.Pd = r[2];
    b.Qd = r[3];
    b.Gs = r[4];
    b.Bs = r[5];
    b.Vm = r[7];
    b.Va = r[8];
    b.base_kV = r[9];
    data.buses.push_back(b);
  }
  // gen = [BUS PG QG QMAX QMIN VG MBASE STATUS ...]
  for (const auto& r : parse_block(text, "gen", 8)) {
    Generator g;
    g.bus = as_int(r[0], "mpc.gen BUS");
    g.Pg = r[1];
    g.Qg = r[2];
    g.Vg = r[5];
    g.status = r[7] > 0.0;
    data.gens.push_back(g);
  }
  // branch = [F_BUS T_BUS R X B RATEA RATEB RATEC TAP SHIFT STATUS ...]
  for (const auto& r : parse_block(text, "branch", 11)) {
    Branch br;
    br.from = as_int(r[0], "mpc.branch F_BUS");
    br.to = as_int(r[1], "mpc.branch T_BUS");
    br.r = r[2];
    br.x = r[3];
    br.b = r[4];
    br.tap = r[8];
    br.shift = r[9];
    br.status = r[10] > 0.0;
    data.branches.push_back(br);
  }
  finalize_case(data);
  return data;
}

// ---------------------------------------------------------------------------
// Validation

void finalize_case(CaseData& data) {
  if (!(data.base_MVA > 0.0) || !std::isfinite(data.base_MVA)) {
    throw ValidationError("base_MVA must be positive");
  }
  if (data.buses.empty()) throw ValidationError("case has no buses");

  std::unordered_map<int, std::size_t> index;
  for (std::size_t i = 0; i < data.buses.size(); ++i) {
    const Bus& b = data.buses[i];
    if (!index.emplace(b.id, i).second) throw ValidationError("duplicate bus id " + std::to_string(b.id));
    if (!(b.Vm > 0.0)) throw ValidationError("bus " + std::to_string(b.id) + ": Vm must be positive");
  }

  std::erase_if(data.branches, [](const Branch& br) { return !br.status; });
  std::erase_if(data.gens, [](const Generator& g) { return !g.status; });

  for (const auto& br : data.branches) {
    const std::string tag = "branch " + std::to_string(br.from) + "-" + std::to_string(br.to);
    if (!index.contains(br.from) || !index.contains(br.to)) throw ValidationError(tag + ": references unknown bus");
    if (br.from == br.to) throw ValidationError(tag + ": from and to bus are identical");
    if (br.r * br.r + br.x * br.x <= 0.0) throw ValidationError(tag + ": zero series impedance");
  }
  std::unordered_set<int> gen_buses;
  for (const auto& g : data.gens) {
    if (!index.contains(g.bus)) throw ValidationError("generator at unknown bus " + std::to_string(g.bus));
    gen_buses.insert(g.bus);
  }

  BusSets sets;
  std::size_t slack_count = 0;
  for (std::size_t i = 0; i < data.buses.size(); ++i) {
    Bus& b = data.buses[i];
    if (b.bus_type == BusType::PV && !gen_buses.contains(b.id)) b.bus_type = BusType::PQ;
    switch (b.bus_type) {
      case BusType::Slack:
        sets.slack_idx = i;
        ++slack_count;
        break;
      case BusType::PV:
        sets.pv_idxs.push_back(i);
        sets.non_slack.push_back(i);
        break;
      case BusType::PQ:
        sets.pq_idxs.push_back(i);
        sets.non_slack.push_back(i);
        break;
    }
  }
  if (slack_count != 1) {
    throw ValidationError("case must have exactly one slack (type 3) bus, found " + std::to_string(slack_count));
  }
  data.bus_sets = std::move(sets);
}

PowerInjection base_injections(const CaseData& data) {
  const auto n = static_cast<Eigen::Index>(data.bus_count());
  PowerInjection spec{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    spec.P[i] = -data.buses[i].Pd;
    spec.Q[i] = -data.buses[i].Qd;
  }
  for (const auto& g : data.gens) {
    const auto i = static_cast<Eigen::Index>(data.index_of(g.bus));
    spec.P[i] += g.Pg;
    spec.Q[i] += g.Qg;
  }
  spec.P /= data.base_MVA;
  spec.Q /= data.base_MVA;
  return spec;
}

// ---------------------------------------------------------------------------
// Native JSON

namespace {

class SchemaReader {
 public:
  const json& object_at(const json& parent, const std::string& parent_path, const char* key) {
    const std::string path = parent_path + "/" + key;
    if (!parent.contains(key)) throw SchemaError(path, "missing required field");
    return parent.at(key);
  }

  double number(const json& obj, const std::string& path, const char* key) {
    const json& v = object_at(obj, path, key);
    if (!v.is_number()) throw SchemaError(path + "/" + key, "expected number");
    return v.get<double>();
  }

  int integer(const json& obj, const std::string& path, const char* key) {
    const json& v = object_at(obj, path, key);
    if (!v.is_number_integer()) throw SchemaError(path + "/" + key, "expected integer");
    return v.get<int>();
  }

  bool boolean(const json& obj, const std::string& path, const char* key) {
    const json& v = object_at(obj, path, key);
    if (!v.is_boolean()) throw SchemaError(path + "/" + key, "expected boolean");
    return v.get<bool>();
  }

  std::string string(const json& obj, const std::string& path, const char* key) {
    const json& v = object_at(obj, path, key);
    if (!v.is_string()) throw SchemaError(path + "/" + key, "expected string");
    return v.get<std::string>();
  }

  const json& array(const json& obj, const std::string& path, const char* key) {
    const json& v = object_at(obj, path, key);
    if (!v.is_array()) throw SchemaError(path + "/" + key, "expected array");
    return v;
  }
};

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw SchemaError(path.empty() ? "/" : path, "expected object");
}

}  // namespace

CaseData parse_native_case(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("native case: ") + e.what());
  }
  require_object(doc, "");
  SchemaReader rd;
  CaseData data;
  data.name = rd.string(doc, "", "name");
  data.base_MVA = rd.number(doc, "", "base_MVA");

  const json& buses = rd.array(doc, "", "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string p = "/buses/" + std::to_string(i);
    require_object(buses[i], p);
    Bus b;
    b.id = rd.integer(buses[i], p, "id");
    const std::string type = rd.string(buses[i], p, "bus_type");
    if (type == "PQ") b.bus_type = BusType::PQ;
    else if (type == "PV") b.bus_type = BusType::PV;
    else if (type == "Slack") b.bus_type = BusType::Slack;
    else throw SchemaError(p + "/bus_type", "expected one of Slack, PV, PQ");
    b.Pd = rd.number(buses[i], p, "Pd");
    b.Qd = rd.number(buses[i], p, "Qd");
    b.Gs = rd.number(buses[i], p, "Gs");
    b.Bs = rd.number(buses[i], p, "Bs");
    b.Vm = rd.number(buses[i], p, "Vm");
    b.Va = rd.number(buses[i], p, "Va");
    b.base_kV = rd.number(buses[i], p, "base_kV");
    data.buses.push_back(b);
  }
  const json& branches = rd.array(doc, "", "branches");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const std::string p = "/branches/" + std::to_string(i);
    require_object(branches[i], p);
    Branch br;
    br.from = rd.integer(branches[i], p, "from");
    br.to = rd.integer(branches[i], p, "to");
    br.r = rd.number(branches[i], p, "r");
    br.x = rd.number(branches[i], p, "x");
    br.b = rd.number(branches[i], p, "b");
    br.tap = rd.number(branches[i], p, "tap");
    br.shift = rd.number(branches[i], p, "shift");
    br.status = rd.boolean(branches[i], p, "status");
    data.branches.push_back(br);
  }
  const json& gens = rd.array(doc, "", "gens");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string p = "/gens/" + std::to_string(i);
    require_object(gens[i], p);
    Generator g;
    g.bus = rd.integer(gens[i], p, "bus");
    g.Pg = rd.number(gens[i], p, "Pg");
    g.Qg = rd.number(gens[i], p, "Qg");
    g.Vg = rd.number(gens[i], p, "Vg");
    g.status = rd.boolean(gens[i], p, "status");
    data.gens.push_back(g);
  }
  finalize_case(data);
  return data;
}

std::string export_native_case(const CaseData& data) {
  json doc = json::object();
  doc["name"] = data.name;
  doc["base_MVA"] = data.base_MVA;
  json buses = json::array();
  for (const auto& b : data.buses) {
    buses.push_back({{"id", b.id},
                     {"bus_type", std::string(to_string(b.bus_type))},
                     {"Pd", b.Pd},
                     {"Qd", b.Qd},
                     {"Gs", b.Gs},
                     {"Bs", b.Bs},
                     {"Vm", b.Vm},
                     {"Va", b.Va},
                     {"base_kV", b.base_kV}});
  }
  json branches = json::array();
  for (const auto& br : data.branches) {
    branches.push_back({{"from", br.from},
                        {"to", br.to},
                        {"r", br.r},
                        {"x", br.x},
                        {"b", br.b},
                        {"tap", br.tap},
                        {"shift", br.shift},
                        {"status", br.status}});
  }
  json gens = json::array();
  for (const auto& g : data.gens) {
    gens.push_back({{"bus", g.bus}, {"Pg", g.Pg}, {"Qg", g.Qg}, {"Vg", g.Vg}, {"status", g.status}});
  }
  doc["buses"] = std::move(buses);
  doc["branches"] = std::move(branches);
  doc["gens"] = std::move(gens);
  return doc.dump(2) + "\n";
}

CaseData load_case(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open case file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") return parse_native_case(buf.str());
  return parse_matpower_case(buf.str(), path.stem().string());
}

}  // namespace neuropf
