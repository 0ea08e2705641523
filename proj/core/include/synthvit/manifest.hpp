#pragma once

#include <optional>
#include <string>
#include <vector>

namespace synthvit {

enum class Label { mpox, normal, other };
enum class Origin { synthetic, real };
enum class Split { train, validation, test };
enum class BodyPart { face, back, chest, leg, neck, arm };
enum class SkinTone { fair, brown, dark };

// String forms used by manifests, file names and reports.
std::string to_string(Label v);
std::string to_string(Origin v);
std::string to_string(Split v);
std::string to_string(BodyPart v);
std::string to_string(SkinTone v);
Label label_from_string(const std::string& s);
Origin origin_from_string(const std::string& s);
Split split_from_string(const std::string& s);
BodyPart body_part_from_string(const std::string& s);
SkinTone skin_tone_from_string(const std::string& s);

constexpr std::size_t kNumLabels = 3;
constexpr std::size_t kNumSplits = 3;
std::vector<Label> all_labels();
std::vector<Split> all_splits();

struct SampleRecord {
    std::string path;
    Label label = Label::mpox;
    Origin origin = Origin::real;
    Split split = Split::train;
    std::optional<BodyPart> body_part;
    std::optional<SkinTone> skin_tone;
};

/// Expected composition of one (label, split) cell: how many records and,
/// when constrained, which origin every record must have.
struct CellPolicy {
    Label label;
    Split split;
    std::size_t count = 0;
    std::optional<Origin> origin;
};

struct CompositionPolicy {
    std::vector<CellPolicy> cells;

    /// Full-scale composition: 1000 synthetic mpox / 1000 real normal /
    /// 1000 real other in train, 150 real per class in validation, 100 real
    /// per class in test.
    static CompositionPolicy table1();

    /// Same shape with custom per-class counts.
    static CompositionPolicy scaled(std::size_t train_per_class, std::size_t val_per_class,
                                    std::size_t test_per_class);
};

struct DatasetManifest {
    int schema_version = 1;
    std::vector<SampleRecord> records;
    std::optional<CompositionPolicy> policy;

    std::vector<const SampleRecord*> split_records(Split split) const;
};

enum class Strictness { strict, lenient };

struct LoadedManifest {
    DatasetManifest manifest;
    std::vector<std::string> warnings;  // duplicates, unknown fields in lenient mode
};

/// Parse the documented JSON schema ({schema_version, records[], policy[]}).
/// Strict mode rejects unknown fields and malformed enums with SchemaError
/// (carrying a line number for parse failures); lenient mode downgrades
/// unknown fields to warnings. Duplicate paths always warn.
LoadedManifest load_manifest(const std::string& path, Strictness strictness = Strictness::strict);

void save_manifest(const std::string& path, const DatasetManifest& manifest);

enum class ViolationKind { balance, origin, schema };

struct Violation {
    ViolationKind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool pass() const { return violations.empty(); }
    std::string to_text() const;
};

/// Check per-cell counts and origin constraints against the manifest's
/// policy. Violations are data, not exceptions; a manifest without a policy
/// fails with a schema violation.
ValidationReport validate_manifest(const DatasetManifest& manifest);

/// Concatenate records left to right; policy (and schema_version) taken from
/// `policy` argument.
DatasetManifest merge_manifests(const std::vector<DatasetManifest>& parts,
                                std::optional<CompositionPolicy> policy);

}  // namespace synthvit
