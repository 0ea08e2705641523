#include "synthvit/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "synthvit/errors.hpp"

namespace synthvit {

using nlohmann::json;

std::string to_string(Label v) {
    switch (v) {
        case Label::mpox: return "M-pox";
        case Label::normal: return "Normal";
        case Label::other: return "Other";
    }
    return "?";
}

std::string to_string(Origin v) {
    return v == Origin::synthetic ? "synthetic" : "real";
}

std::string to_string(Split v) {
    switch (v) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

std::string to_string(BodyPart v) {
    switch (v) {
        case BodyPart::face: return "face";
        case BodyPart::back: return "back";
        case BodyPart::chest: return "chest";
        case BodyPart::leg: return "leg";
        case BodyPart::neck: return "neck";
        case BodyPart::arm: return "arm";
    }
    return "?";
}

std::string to_string(SkinTone v) {
    switch (v) {
        case SkinTone::fair: return "fair";
        case SkinTone::brown: return "brown";
        case SkinTone::dark: return "dark";
    }
    return "?";
}

Label label_from_string(const std::string& s) {
    if (s == "M-pox") return Label::mpox;
    if (s == "Normal") return Label::normal;
    if (s == "Other") return Label::other;
    throw SchemaError("unknown label '" + s + "'");
}

Origin origin_from_string(const std::string& s) {
    if (s == "synthetic") return Origin::synthetic;
    if (s == "real") return Origin::real;
    throw SchemaError("unknown origin '" + s + "'");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw SchemaError("unknown split '" + s + "'");
}

BodyPart body_part_from_string(const std::string& s) {
    if (s == "face") return BodyPart::face;
    if (s == "back") return BodyPart::back;
    if (s == "chest") return BodyPart::chest;
    if (s == "leg") return BodyPart::leg;
    if (s == "neck") return BodyPart::neck;
    if (s == "arm") return BodyPart::arm;
    throw SchemaError("unknown body_part '" + s + "'");
}

SkinTone skin_tone_from_string(const std::string& s) {
    if (s == "fair") return SkinTone::fair;
    if (s == "brown") return SkinTone::brown;
    if (s == "dark") return SkinTone::dark;
    throw SchemaError("unknown skin_tone '" + s + "'");
}

std::vector<Label> all_labels() {
    return {Label::mpox, Label::normal, Label::other};
}

std::vector<Split> all_splits() {
    return {Split::train, Split::validation, Split::test};
}

CompositionPolicy CompositionPolicy::table1() {
    return scaled(1000, 150, 100);
}

CompositionPolicy CompositionPolicy::scaled(std::size_t train_per_class, std::size_t val_per_class,
                                            std::size_t test_per_class) {
    CompositionPolicy p;
    for (Label label : all_labels()) {
        const Origin train_origin = label == Label::mpox ? Origin::synthetic : Origin::real;
        p.cells.push_back({label, Split::train, train_per_class, train_origin});
        p.cells.push_back({label, Split::validation, val_per_class, Origin::real});
        p.cells.push_back({label, Split::test, test_per_class, Origin::real});
    }
    return p;
}

std::vector<const SampleRecord*> DatasetManifest::split_records(Split split) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : records) {
        if (r.split == split) out.push_back(&r);
    }
    return out;
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

void check_known_fields(const json& obj, const std::set<std::string>& known, const std::string& where,
                        Strictness strictness, std::vector<std::string>& warnings) {
    for (const auto& [key, _] : obj.items()) {
        if (!known.count(key)) {
            if (strictness == Strictness::strict) {
                throw SchemaError(where + ": unknown field '" + key + "'");
            }
            warnings.push_back(where + ": ignoring unknown field '" + key + "'");
        }
    }
}

CellPolicy cell_from_json(const json& j, std::size_t index, Strictness strictness,
                          std::vector<std::string>& warnings) {
    const std::string where = "policy[" + std::to_string(index) + "]";
    if (!j.is_object()) throw SchemaError(where + ": expected an object");
    check_known_fields(j, {"label", "split", "count", "origin"}, where, strictness, warnings);
    CellPolicy cell;
    try {
        cell.label = label_from_string(j.at("label").get<std::string>());
        cell.split = split_from_string(j.at("split").get<std::string>());
        cell.count = j.at("count").get<std::size_t>();
        if (j.contains("origin") && !j.at("origin").is_null()) {
            cell.origin = origin_from_string(j.at("origin").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw SchemaError(where + ": " + e.what());
    }
    return cell;
}

json cell_to_json(const CellPolicy& cell) {
    json j{{"label", to_string(cell.label)},
           {"split", to_string(cell.split)},
           {"count", cell.count}};
    if (cell.origin) j["origin"] = to_string(*cell.origin);
    return j;
}

SampleRecord record_from_json(const json& j, std::size_t index, Strictness strictness,
                              std::vector<std::string>& warnings) {
    const std::string where = "records[" + std::to_string(index) + "]";
    if (!j.is_object()) throw SchemaError(where + ": expected an object");
    check_known_fields(j, {"path", "label", "origin", "split", "body_part", "skin_tone"}, where,
                       strictness, warnings);
    SampleRecord r;
    try {
        r.path = j.at("path").get<std::string>();
        r.label = label_from_string(j.at("label").get<std::string>());
        r.origin = origin_from_string(j.at("origin").get<std::string>());
        r.split = split_from_string(j.at("split").get<std::string>());
        if (j.contains("body_part") && !j.at("body_part").is_null()) {
            r.body_part = body_part_from_string(j.at("body_part").get<std::string>());
        }
        if (j.contains("skin_tone") && !j.at("skin_tone").is_null()) {
            r.skin_tone = skin_tone_from_string(j.at("skin_tone").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw SchemaError(where + ": " + e.what());
    }
    if (r.path.empty()) throw SchemaError(where + ": path must be non-empty");
    return r;
}

json record_to_json(const SampleRecord& r) {
    json j{{"path", r.path},
           {"label", to_string(r.label)},
           {"origin", to_string(r.origin)},
           {"split", to_string(r.split)}};
    if (r.body_part) j["body_part"] = to_string(*r.body_part);
    if (r.skin_tone) j["skin_tone"] = to_string(*r.skin_tone);
    return j;
}

}  // namespace

LoadedManifest load_manifest(const std::string& path, Strictness strictness) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("manifest '" + path + "': " + e.what(), line_of_offset(text, e.byte));
    }
    if (!doc.is_object()) throw SchemaError("manifest '" + path + "': top level must be an object");

    LoadedManifest out;
    check_known_fields(doc, {"schema_version", "records", "policy"}, "manifest", strictness,
                       out.warnings);
    try {
        out.manifest.schema_version = doc.at("schema_version").get<int>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: schema_version: ") + e.what());
    }
    if (out.manifest.schema_version != 1) {
        throw SchemaError("manifest '" + path + "': unsupported schema_version " +
                          std::to_string(out.manifest.schema_version));
    }
    if (!doc.contains("records") || !doc.at("records").is_array()) {
        throw SchemaError("manifest '" + path + "': records[] is required");
    }
    std::size_t idx = 0;
    for (const auto& rj : doc.at("records")) {
        out.manifest.records.push_back(record_from_json(rj, idx++, strictness, out.warnings));
    }
    if (doc.contains("policy") && !doc.at("policy").is_null()) {
        const auto& pj = doc.at("policy");
        if (!pj.is_array()) throw SchemaError("manifest '" + path + "': policy must be an array");
        CompositionPolicy policy;
        std::size_t ci = 0;
        for (const auto& cj : pj) {
            policy.cells.push_back(cell_from_json(cj, ci++, strictness, out.warnings));
        }
        out.manifest.policy = std::move(policy);
    }

    std::map<std::string, std::size_t> seen;
    for (const auto& r : out.manifest.records) seen[r.path]++;
    for (const auto& [p, n] : seen) {
        if (n > 1) {
            out.warnings.push_back("duplicate path '" + p + "' appears " + std::to_string(n) +
                                   " times");
        }
    }
    return out;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    json doc;
    doc["schema_version"] = manifest.schema_version;
    doc["records"] = json::array();
    for (const auto& r : manifest.records) doc["records"].push_back(record_to_json(r));
    if (manifest.policy) {
        doc["policy"] = json::array();
        for (const auto& c : manifest.policy->cells) doc["policy"].push_back(cell_to_json(c));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + path + "'");
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("short write on manifest '" + path + "'");
}

ValidationReport validate_manifest(const DatasetManifest& manifest) {
    ValidationReport report;
    if (!manifest.policy) {
        report.violations.push_back({ViolationKind::schema, "manifest carries no policy block"});
        return report;
    }
    const auto& policy = *manifest.policy;

    std::map<std::pair<Label, Split>, std::size_t> counts;
    for (const auto& r : manifest.records) counts[{r.label, r.split}]++;

    std::set<std::pair<Label, Split>> covered;
    for (const auto& cell : policy.cells) {
        covered.insert({cell.label, cell.split});
        const std::size_t actual = counts.count({cell.label, cell.split})
                                       ? counts[{cell.label, cell.split}]
                                       : 0;
        if (actual != cell.count) {
            report.violations.push_back(
                {ViolationKind::balance,
                 "BalanceViolation: cell (" + to_string(cell.label) + ", " + to_string(cell.split) +
                     ") expected " + std::to_string(cell.count) + " records, found " +
                     std::to_string(actual)});
        }
        if (cell.origin) {
            for (const auto& r : manifest.records) {
                if (r.label == cell.label && r.split == cell.split && r.origin != *cell.origin) {
                    report.violations.push_back(
                        {ViolationKind::origin,
                         "OriginViolation: record '" + r.path + "' in cell (" +
                             to_string(cell.label) + ", " + to_string(cell.split) + ") has origin " +
                             to_string(r.origin) + ", policy requires " + to_string(*cell.origin)});
                }
            }
        }
    }
    // Records in cells the policy does not mention break the composition too.
    for (const auto& [key, n] : counts) {
        if (!covered.count(key)) {
            report.violations.push_back(
                {ViolationKind::balance,
                 "BalanceViolation: cell (" + to_string(key.first) + ", " + to_string(key.second) +
                     ") is not part of the policy but holds " + std::to_string(n) + " records"});
        }
    }
    return report;
}

std::string ValidationReport::to_text() const {
    if (pass()) return "PASS: manifest matches its composition policy\n";
    std::string out;
    for (const auto& v : violations) {
        out += v.message;
        out += '\n';
    }
    return out;
}

DatasetManifest merge_manifests(const std::vector<DatasetManifest>& parts,
                                std::optional<CompositionPolicy> policy) {
    DatasetManifest merged;
    for (const auto& part : parts) {
        merged.records.insert(merged.records.end(), part.records.begin(), part.records.end());
    }
    merged.policy = std::move(policy);
    return merged;
}

}  // namespace synthvit
