#include <cmath>
#include <cstdio>
#include <fstream>

#include "vmm/cli.hpp"

namespace vmm::cli {

namespace {

void put_number(std::string& out, double x) {
  if (!std::isfinite(x)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}

void put(std::string& out, const Json& v, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (v.type()) {
    case Json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        put(out, it.value(), indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_primitive(); });
      out += '[';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += flat || indent < 0 ? (indent < 0 ? "," : ", ") : ",";
        if (!flat) newline(depth + 1);
        put(out, v[i], indent, depth + 1);
      }
      if (!flat) newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float:
      put_number(out, v.get<double>());
      return;
    default:
      out += v.dump();
  }
}

}  // namespace

std::string format_json(const Json& value, int indent) {
  std::string out;
  put(out, value, indent, 0);
  return out;
}

void write_json(const std::filesystem::path& path, const Json& value) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path.string());
  f << format_json(value) << '\n';
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config " + path.string());
  try {
    return Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

}  // namespace vmm::cli
