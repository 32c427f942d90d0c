#include "ddpm/target_json.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ddpm {

namespace {

using nlohmann::json;

VectorXd parse_vector(const json& j, int dim, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw ContractError(what + ": expected an array of length " +
                        std::to_string(dim));
  VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = j[i].get<double>();
  return v;
}

MatrixXd parse_matrix(const json& j, int dim, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw ContractError(what + ": expected a " + std::to_string(dim) + "x" +
                        std::to_string(dim) + " matrix");
  MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i)
    m.row(i) = parse_vector(j[i], dim, what + " row").transpose();
  return m;
}

}  // namespace

Target parse_target_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("target JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("kind"))
    throw ContractError("target JSON: missing \"kind\"");
  const std::string kind = j["kind"].get<std::string>();
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    throw ContractError("target JSON: missing integer \"dim\"");
  const int dim = j["dim"].get<int>();

  if (kind == "gaussian_mixture") {
    if (!j.contains("components") || !j["components"].is_array() ||
        j["components"].empty())
      throw ContractError("target JSON: gaussian_mixture needs components");
    const auto& comps = j["components"];
    VectorXd weights(comps.size());
    std::vector<VectorXd> means;
    std::vector<MatrixXd> covs;
    for (size_t n = 0; n < comps.size(); ++n) {
      const auto& c = comps[n];
      weights[static_cast<int>(n)] = c.at("weight").get<double>();
      means.push_back(parse_vector(c.at("mean"), dim, "component mean"));
      covs.push_back(parse_matrix(c.at("cov"), dim, "component cov"));
    }
    return GaussianMixture::make(dim, weights, means, covs);
  }
  if (kind == "atom_cloud") {
    if (!j.contains("atoms") || !j["atoms"].is_array() || j["atoms"].empty())
      throw ContractError("target JSON: atom_cloud needs atoms");
    const auto& atom_list = j["atoms"];
    VectorXd weights(atom_list.size());
    std::vector<VectorXd> atoms;
    for (size_t n = 0; n < atom_list.size(); ++n) {
      weights[static_cast<int>(n)] = atom_list[n].at("weight").get<double>();
      atoms.push_back(parse_vector(atom_list[n].at("x"), dim, "atom x"));
    }
    return AtomCloud::make(dim, atoms, weights);
  }
  throw ContractError("target JSON: unknown kind \"" + kind + "\"");
}

Target load_target_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open target file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_target_json(ss.str());
}

std::string target_to_json(const Target& target) {
  json j;
  if (const auto* gm = std::get_if<GaussianMixture>(&target)) {
    j["kind"] = "gaussian_mixture";
    j["dim"] = gm->dim;
    json comps = json::array();
    for (size_t n = 0; n < gm->weights.size(); ++n) {
      json c;
      c["weight"] = gm->weights[n];
      c["mean"] = std::vector<double>(gm->means[n].data(),
                                      gm->means[n].data() + gm->dim);
      json rows = json::array();
      for (int i = 0; i < gm->dim; ++i) {
        const VectorXd row = gm->covs[n].row(i);
        rows.push_back(std::vector<double>(row.data(), row.data() + gm->dim));
      }
      c["cov"] = rows;
      comps.push_back(c);
    }
    j["components"] = comps;
  } else {
    const auto& cloud = std::get<AtomCloud>(target);
    j["kind"] = "atom_cloud";
    j["dim"] = cloud.dim;
    json atoms = json::array();
    for (size_t n = 0; n < cloud.weights.size(); ++n) {
      json a;
      a["weight"] = cloud.weights[n];
      a["x"] = std::vector<double>(cloud.atoms[n].data(),
                                   cloud.atoms[n].data() + cloud.dim);
      atoms.push_back(a);
    }
    j["atoms"] = atoms;
  }
  return j.dump(2);
}

}  // namespace ddpm
