#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/hash.hpp"

namespace bmcl {

enum class FeatureKind { Continuous, Categorical };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Continuous;
    std::vector<int> categories;  // sorted, duplicate-free integer codes
    bool morphometric = false;
};

// Ordered feature metadata. Order is canonical: every matrix, encoded block
// and report indexes features by their position here.
struct TabularSchema {
    std::vector<FeatureSpec> features;

    size_t size() const { return features.size(); }
    const FeatureSpec& at(size_t i) const { return features[i]; }

    std::optional<size_t> index_of(const std::string& name) const {
        for (size_t i = 0; i < features.size(); ++i) {
            if (features[i].name == name) return i;
        }
        return std::nullopt;
    }

    void validate() const {
        std::set<std::string> names;
        for (const auto& f : features) {
            if (f.name.empty()) throw SchemaError("feature with empty name");
            if (!names.insert(f.name).second) {
                throw SchemaError("duplicate feature name: " + f.name);
            }
            if (f.kind == FeatureKind::Categorical) {
                if (f.categories.empty()) {
                    throw SchemaError("categorical feature has no categories: " + f.name);
                }
                if (!std::is_sorted(f.categories.begin(), f.categories.end())) {
                    throw SchemaError("categories not sorted for feature: " + f.name);
                }
                if (std::adjacent_find(f.categories.begin(), f.categories.end()) !=
                    f.categories.end()) {
                    throw SchemaError("duplicate category code for feature: " + f.name);
                }
            } else if (!f.categories.empty()) {
                throw SchemaError("continuous feature lists categories: " + f.name);
            }
        }
    }
};

inline bool is_valid_code(const FeatureSpec& f, double value) {
    if (f.kind != FeatureKind::Categorical) return true;
    const double r = std::round(value);
    if (r != value) return false;
    const int code = static_cast<int>(r);
    return std::binary_search(f.categories.begin(), f.categories.end(), code);
}

// Nearest valid category code; ties resolve toward the smaller code. The
// result is clamped into the schema's code range by construction.
inline int nearest_code(const FeatureSpec& f, double value) {
    int best = f.categories.front();
    double best_dist = std::abs(value - best);
    for (int c : f.categories) {
        const double d = std::abs(value - c);
        if (d < best_dist) {
            best = c;
            best_dist = d;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Schema file format: one [feature] block per feature, `key = value` lines.
//
//   [feature]
//   name = area
//   kind = continuous
//   morphometric = true
//
//   [feature]
//   name = category_tag
//   kind = categorical
//   categories = 0,1,2
//   morphometric = false
// ---------------------------------------------------------------------------

inline std::string serialize_schema(const TabularSchema& schema) {
    std::ostringstream out;
    for (const auto& f : schema.features) {
        out << "[feature]\n";
        out << "name = " << f.name << "\n";
        out << "kind = " << (f.kind == FeatureKind::Continuous ? "continuous" : "categorical")
            << "\n";
        if (f.kind == FeatureKind::Categorical) {
            out << "categories = ";
            for (size_t i = 0; i < f.categories.size(); ++i) {
                if (i) out << ',';
                out << f.categories[i];
            }
            out << "\n";
        }
        out << "morphometric = " << (f.morphometric ? "true" : "false") << "\n\n";
    }
    return out.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

inline TabularSchema parse_schema(std::istream& in) {
    TabularSchema schema;
    FeatureSpec cur;
    bool open = false;
    auto flush = [&] {
        if (open) schema.features.push_back(cur);
        cur = FeatureSpec{};
    };
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t == "[feature]") {
            flush();
            open = true;
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos || !open) {
            throw ParseError("schema file line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key == "name") {
            cur.name = value;
        } else if (key == "kind") {
            if (value == "continuous") {
                cur.kind = FeatureKind::Continuous;
            } else if (value == "categorical") {
                cur.kind = FeatureKind::Categorical;
            } else {
                throw ParseError("schema file line " + std::to_string(lineno) + ": unknown kind '" + value + "'");
            }
        } else if (key == "categories") {
            cur.categories.clear();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = detail::trim(item);
                if (item.empty()) continue;
                try {
                    cur.categories.push_back(std::stoi(item));
                } catch (const std::exception&) {
                    throw ParseError("schema file line " + std::to_string(lineno) + ": bad category code '" + item + "'");
                }
            }
        } else if (key == "morphometric") {
            if (value == "true") {
                cur.morphometric = true;
            } else if (value == "false") {
                cur.morphometric = false;
            } else {
                throw ParseError("schema file line " + std::to_string(lineno) + ": morphometric must be true/false");
            }
        } else {
            throw ParseError("schema file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    flush();
    schema.validate();
    return schema;
}

inline TabularSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open schema file: " + path);
    return parse_schema(in);
}

inline void save_schema(const std::string& path, const TabularSchema& schema) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open schema file for writing: " + path);
    out << serialize_schema(schema);
}

inline uint64_t schema_hash(const TabularSchema& schema) {
    return fnv1a(serialize_schema(schema));
}

}  // namespace bmcl
