#include <cstdlib>
#include <fstream>
#include <sstream>

#include "zelda/error.hpp"
#include "zelda/service.hpp"

namespace zelda {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size() || v < 0) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::kInvalidArgument, key + " must be a non-negative integer, got '" + value + "'");
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::kInvalidArgument, key + " must be a number, got '" + value + "'");
    }
}

const char* const kKeys[] = {"data_dir",         "embedder_url",  "default_k",       "default_prune_threshold",
                             "default_temperature", "label_set_path", "quality_terms", "prompt_template",
                             "listen_addr"};

}  // namespace

void EngineConfig::set(const std::string& key, const std::string& value) {
    if (key == "data_dir") {
        data_dir = value;
    } else if (key == "embedder_url") {
        if (value.empty()) {
            embedder_url.reset();
        } else {
            embedder_url = value;
        }
    } else if (key == "default_k") {
        default_k = parse_size(key, value);
    } else if (key == "default_prune_threshold") {
        default_prune_threshold = parse_real(key, value);
    } else if (key == "default_temperature") {
        default_temperature = parse_real(key, value);
    } else if (key == "label_set_path") {
        label_set_path = value;
    } else if (key == "quality_terms") {
        quality_terms = split_list(value);
    } else if (key == "prompt_template") {
        prompt_template = value;
    } else if (key == "listen_addr") {
        listen_addr = value;
    } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
}

EngineConfig EngineConfig::parse(const std::string& text) {
    EngineConfig cfg;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
        }
        for (const auto& [key, value] : j.items()) {
            if (key == "quality_terms" && value.is_array()) {
                cfg.quality_terms = value.get<std::vector<std::string>>();
            } else if (value.is_string()) {
                cfg.set(key, value.get<std::string>());
            } else if (value.is_null()) {
                cfg.set(key, "");
            } else {
                cfg.set(key, value.dump());
            }
        }
    } else {
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            line = trim(line);
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::kInvalidArgument, "config line " + std::to_string(line_no) + " has no '='");
            }
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    cfg.validate();
    return cfg;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void EngineConfig::apply_env() {
    for (const char* key : kKeys) {
        std::string name = "ZELDA_";
        for (const char* c = key; *c; ++c) name += static_cast<char>(std::toupper(static_cast<unsigned char>(*c)));
        if (const char* value = std::getenv(name.c_str())) set(key, value);
    }
    validate();
}

void EngineConfig::validate() const {
    if (default_k < 1) throw Error(ErrorCode::kInvalidArgument, "default_k must be >= 1");
    if (!(default_prune_threshold > 0.0 && default_prune_threshold <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "default_prune_threshold must be in (0, 1]");
    }
    if (!(default_temperature > 0.0)) throw Error(ErrorCode::kInvalidArgument, "default_temperature must be > 0");
    apply_template(prompt_template, "x");
}

}  // namespace zelda
