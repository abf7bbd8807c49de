#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace causalma::cli {

// Reads a flat JSON object whose keys are the long flag names of the selected
// subcommand, e.g. {"m": 5, "delta": "normal", "methods": ["mom", "wild"]}.
// A "command" key, if present, must name the selected subcommand. Values
// given on the command line take precedence.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::ordered_json j;
    for (const CLI::App* sub : app->get_subcommands({})) {
      if (!sub->parsed()) continue;
      j["command"] = sub->get_name();
      for (const CLI::Option* opt : sub->get_options({})) {
        if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
        const std::string name = opt->get_lnames()[0];
        if (opt->count() > 0) {
          const auto& results = opt->results();
          if (opt->get_type_size() == 0) j[name] = opt->as<bool>();
          else if (opt->get_expected_max() > 1) j[name] = results;
          else j[name] = results.front();
        } else if (default_also && !opt->get_default_str().empty()) {
          j[name] = opt->get_default_str();
        }
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");

    std::vector<std::string> parents;
    const auto selected = root_->get_subcommands();
    if (!selected.empty()) parents.push_back(selected.front()->get_name());

    std::vector<CLI::ConfigItem> items;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "command") {
        if (!it->is_string() || parents.empty() || it->get<std::string>() != parents.front()) {
          throw CLI::ConversionError("config file was written for command " + it->dump());
        }
        continue;
      }
      CLI::ConfigItem item;
      item.name = it.key();
      item.parents = parents;
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(it.key(), v));
      } else {
        item.inputs.push_back(scalar(it.key(), *it));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const std::string& key, const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    // dump() keeps integers exact and doubles round-trippable.
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config key '" + key + "' must hold a scalar or an array of scalars");
  }

  const CLI::App* root_;
};

}  // namespace causalma::cli
