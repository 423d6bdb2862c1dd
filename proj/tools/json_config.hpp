#pragma once

#include <algorithm>
#include <cstdlib>
#include <istream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace distortlab::cli {

// Reads a JSON object of option values for the subcommand being run. Keys
// may use '_' or '-'; arrays become repeated inputs. Top-level keys apply to
// that subcommand, a nested object under its own name is read as well, and
// objects for other subcommands are skipped, so one file can hold settings
// for several. Values whose option is also set through its environment
// variable are dropped, so the environment takes precedence over the file.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json out = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      std::vector<std::string> values = opt->reduced_results();
      if (values.empty() && default_also && !opt->get_default_str().empty()) values = {opt->get_default_str()};
      if (values.empty()) continue;
      if (values.size() == 1) out[name] = values.front();
      else out[name] = values;
    }
    return out.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    const std::string text{std::istreambuf_iterator<char>(input), std::istreambuf_iterator<char>()};
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    const auto selected = root_->get_subcommands();
    if (selected.empty()) return {};
    std::vector<CLI::ConfigItem> items;
    collect(doc, *selected.front(), items, true);
    return items;
  }

 private:
  void collect(const nlohmann::json& obj, const CLI::App& sub, std::vector<CLI::ConfigItem>& items, bool top) const {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        if (top && key == sub.get_name()) collect(value, sub, items, false);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = {sub.get_name()};
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (overridden_by_env(sub, item.name)) continue;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }

  static bool overridden_by_env(const CLI::App& sub, const std::string& name) {
    const CLI::Option* opt = sub.get_option_no_throw("--" + name);
    if (!opt || opt->get_envname().empty()) return false;
    const char* v = std::getenv(opt->get_envname().c_str());
    return v != nullptr && *v != '\0';
  }

  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_null()) return "";
    return v.dump();
  }

  const CLI::App* root_;
};

}  // namespace distortlab::cli
