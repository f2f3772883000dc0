#pragma once

// Line-oriented scenario format. One declaration per line, `#` starts a
// comment, tokens are whitespace separated:
//
//   horizon <levels>
//   as <id> deployed|undeployed
//   as-link <as> <as>
//   router <id> as=<as> [mark=<p>] [itrace=<q>] [firewall]
//   host <id> as=<as>
//   link <node> <node>
//   attacker <host>
//   victim <host>
//   flow <src-host> <dst-host> rate=<packets/tick> attack|benign
//   param <key> <value>
//
// Declarations may appear in any order that defines an AS before the nodes
// that live in it and nodes before the links that use them.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tracelab/core.hpp"
#include "tracelab/topology.hpp"

namespace tracelab {

struct FlowSpec {
  NodeId source{};
  NodeId destination{};
  double rate = 1.0;
  bool attack = false;

  bool operator==(const FlowSpec&) const = default;
};

struct Scenario {
  Topology topology;
  std::vector<FlowSpec> flows;
  std::map<std::string, std::string> params;

  bool operator==(const Scenario&) const = default;

  std::string param(const std::string& key, const std::string& fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

class LineParser {
 public:
  LineParser(std::size_t line_no, std::string_view keyword) : line_no_(line_no), keyword_(keyword) {}

  [[noreturn]] void fail(const std::string& field, const std::string& why) const {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no_) + " (" +
                                          std::string(keyword_) + "): field '" + field + "' " + why);
  }

  std::uint32_t uint(std::string_view tok, const std::string& field) const {
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail(field, "expects an unsigned integer, got '" + std::string(tok) + "'");
    return v;
  }

  double real(std::string_view tok, const std::string& field) const {
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail(field, "expects a number, got '" + std::string(tok) + "'");
    return v;
  }

  // Value of a `key=value` token, or empty view if the token has another key.
  static bool keyed(std::string_view tok, std::string_view key, std::string_view& value) {
    if (tok.size() <= key.size() || tok.substr(0, key.size()) != key || tok[key.size()] != '=') return false;
    value = tok.substr(key.size() + 1);
    return true;
  }

 private:
  std::size_t line_no_;
  std::string_view keyword_;
};

}  // namespace detail

inline Scenario parse_scenario(std::string_view text) {
  Scenario s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const std::string_view kw = tok[0];
    detail::LineParser lp(line_no, kw);
    auto expect = [&](std::size_t lo, std::size_t hi) {
      if (tok.size() < lo || tok.size() > hi)
        lp.fail("arity", "expects " + std::to_string(lo - 1) + ".." + std::to_string(hi - 1) + " arguments");
    };
    try {
      if (kw == "horizon") {
        expect(2, 2);
        s.topology.set_deployment_horizon(static_cast<int>(lp.uint(tok[1], "levels")));
      } else if (kw == "as") {
        expect(3, 3);
        if (tok[2] != "deployed" && tok[2] != "undeployed") lp.fail("deployment", "must be 'deployed' or 'undeployed'");
        s.topology.add_as(as_id(lp.uint(tok[1], "id")), tok[2] == "deployed");
      } else if (kw == "as-link") {
        expect(3, 3);
        s.topology.add_as_edge(as_id(lp.uint(tok[1], "as")), as_id(lp.uint(tok[2], "as")));
      } else if (kw == "router") {
        expect(3, 6);
        RouterNode r;
        r.id = node(lp.uint(tok[1], "id"));
        bool have_as = false;
        for (std::size_t i = 2; i < tok.size(); ++i) {
          std::string_view v;
          if (detail::LineParser::keyed(tok[i], "as", v)) {
            r.domain = as_id(lp.uint(v, "as"));
            have_as = true;
          } else if (detail::LineParser::keyed(tok[i], "mark", v)) {
            r.marking_probability = lp.real(v, "mark");
          } else if (detail::LineParser::keyed(tok[i], "itrace", v)) {
            r.itrace_probability = lp.real(v, "itrace");
          } else if (tok[i] == "firewall") {
            r.firewall = true;
          } else {
            lp.fail(std::string(tok[i]), "is not a router attribute");
          }
        }
        if (!have_as) lp.fail("as", "is required");
        s.topology.add_router(r);
      } else if (kw == "host") {
        expect(3, 3);
        std::string_view v;
        if (!detail::LineParser::keyed(tok[2], "as", v)) lp.fail("as", "is required");
        s.topology.add_host(node(lp.uint(tok[1], "id")), as_id(lp.uint(v, "as")));
      } else if (kw == "link") {
        expect(3, 3);
        s.topology.add_link(node(lp.uint(tok[1], "node")), node(lp.uint(tok[2], "node")));
      } else if (kw == "attacker") {
        expect(2, 2);
        s.topology.set_attacker(node(lp.uint(tok[1], "host")));
      } else if (kw == "victim") {
        expect(2, 2);
        s.topology.set_victim(node(lp.uint(tok[1], "host")));
      } else if (kw == "flow") {
        expect(5, 5);
        FlowSpec f;
        f.source = node(lp.uint(tok[1], "src"));
        f.destination = node(lp.uint(tok[2], "dst"));
        std::string_view v;
        if (!detail::LineParser::keyed(tok[3], "rate", v)) lp.fail("rate", "is required");
        f.rate = lp.real(v, "rate");
        if (!(f.rate > 0)) lp.fail("rate", "must be positive");
        if (tok[4] != "attack" && tok[4] != "benign") lp.fail("kind", "must be 'attack' or 'benign'");
        f.attack = tok[4] == "attack";
        if (!s.topology.is_host(f.source) || !s.topology.is_host(f.destination))
          lp.fail("src/dst", "must name declared hosts");
        s.flows.push_back(f);
      } else if (kw == "param") {
        expect(3, 3);
        s.params[std::string(tok[1])] = std::string(tok[2]);
      } else {
        lp.fail("keyword", "is unknown");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ParseError) throw;
      lp.fail(std::string(kw), e.what());
    }
  }
  try {
    s.topology.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return s;
}

inline std::string serialize_scenario(const Scenario& s) {
  std::ostringstream os;
  const Topology& t = s.topology;
  os << "horizon " << t.deployment_horizon() << '\n';
  for (const auto& [id, info] : t.ases())
    os << "as " << id << ' ' << (info.spie_deployed ? "deployed" : "undeployed") << '\n';
  for (const auto& [a, b] : t.as_edges()) os << "as-link " << a << ' ' << b << '\n';
  for (const auto& [id, r] : t.routers()) {
    os << "router " << id << " as=" << r.domain;
    if (r.marking_probability != 0.0) os << " mark=" << format_double(r.marking_probability);
    if (r.itrace_probability != 0.0) os << " itrace=" << format_double(r.itrace_probability);
    if (r.firewall) os << " firewall";
    os << '\n';
  }
  for (const auto& [id, h] : t.hosts()) os << "host " << id << " as=" << h.domain << '\n';
  for (const auto& [a, b] : t.links()) os << "link " << a << ' ' << b << '\n';
  if (t.attacker()) os << "attacker " << *t.attacker() << '\n';
  if (t.victim()) os << "victim " << *t.victim() << '\n';
  for (const auto& f : s.flows)
    os << "flow " << f.source << ' ' << f.destination << " rate=" << format_double(f.rate) << ' '
       << (f.attack ? "attack" : "benign") << '\n';
  for (const auto& [k, v] : s.params) os << "param " << k << ' ' << v << '\n';
  return os.str();
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

}  // namespace tracelab
