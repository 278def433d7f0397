#include "rfslam/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "rfslam/errors.hpp"

namespace rfslam {

namespace {

using nlohmann::json;

json vec_json(const Vec2& p) { return json::array({p.x(), p.y()}); }
Vec2 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

void save_checkpoint(const FilterState& s, const std::filesystem::path& file) {
  json doc;
  doc["version"] = kCheckpointVersion;
  doc["n"] = s.n;
  doc["next_id"] = s.next_id;
  doc["los_existence"] = s.los_existence;
  json agent = json::array();
  for (std::size_t i = 0; i < s.agent.size(); ++i) {
    const AgentState& x = s.agent.x[i];
    agent.push_back({x.p.x(), x.p.y(), x.v.x(), x.v.y(), x.dphi, s.agent.w[i]});
  }
  doc["agent"] = std::move(agent);
  json psfvs = json::array();
  for (const PsfvBelief& y : s.psfvs) {
    json parts = json::array();
    for (std::size_t i = 0; i < y.size(); ++i)
      parts.push_back({y.pos[i].x(), y.pos[i].y(), y.rho[i], y.w[i]});
    psfvs.push_back({{"id", y.id}, {"r_prob", y.r_prob}, {"particles", std::move(parts)}});
  }
  doc["psfvs"] = std::move(psfvs);
  const GridSpec& g = s.grid.spec;
  doc["grid"] = {{"origin", vec_json(g.origin)},
                 {"cell_size", g.cell_size},
                 {"nx", g.nx},
                 {"ny", g.ny},
                 {"p_occ", s.grid.p_occ}};
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << doc.dump() << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

FilterState load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open checkpoint " + file.string());
  FilterState s;
  try {
    json doc;
    in >> doc;
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw ConfigError("unsupported checkpoint version");
    s.n = doc.at("n").get<int>();
    s.next_id = doc.at("next_id").get<std::uint64_t>();
    s.los_existence = doc.at("los_existence").get<std::vector<double>>();
    for (const json& a : doc.at("agent")) {
      AgentState x;
      x.p = {a.at(0).get<double>(), a.at(1).get<double>()};
      x.v = {a.at(2).get<double>(), a.at(3).get<double>()};
      x.dphi = a.at(4).get<double>();
      s.agent.x.push_back(x);
      s.agent.w.push_back(a.at(5).get<double>());
    }
    for (const json& p : doc.at("psfvs")) {
      PsfvBelief y;
      y.id = p.at("id").get<std::uint64_t>();
      y.r_prob = p.at("r_prob").get<double>();
      for (const json& q : p.at("particles")) {
        y.pos.emplace_back(q.at(0).get<double>(), q.at(1).get<double>());
        y.rho.push_back(q.at(2).get<double>());
        y.w.push_back(q.at(3).get<double>());
      }
      s.psfvs.push_back(std::move(y));
    }
    const json& g = doc.at("grid");
    GridSpec spec;
    spec.origin = json_vec(g.at("origin"));
    spec.cell_size = g.at("cell_size").get<double>();
    spec.nx = g.at("nx").get<int>();
    spec.ny = g.at("ny").get<int>();
    s.grid.spec = spec;
    s.grid.p_occ = g.at("p_occ").get<std::vector<double>>();
    if (!spec.valid() || s.grid.p_occ.size() != spec.size())
      throw ConfigError("checkpoint grid does not match its layout");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + file.string() + ": " + e.what());
  }
  return s;
}

}  // namespace rfslam
