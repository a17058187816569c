#include "labconv/cohort.hpp"
#include "labconv/csv.hpp"
#include "labconv/errors.hpp"

#include <algorithm>
#include <string>

namespace labconv::cohort {

namespace {

void expect_header(std::istream& in, const std::string& file, const std::string& header) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != header) {
        throw ParseError(file, 1, "expected header '" + header + "'");
    }
}

struct MonthAccumulator {
    double sum = 0.0;
    int count = 0;
};

}  // namespace

std::vector<PatientRecord> ingest(const std::filesystem::path& observations_file,
                                  const std::filesystem::path& diagnoses_file,
                                  std::optional<int> horizon) {
    std::map<std::string, std::map<std::string, std::map<int, MonthAccumulator>>> labs;
    std::map<std::string, PatientRecord> records;

    {
        const std::string file = observations_file.string();
        auto in = csv::open_input(observations_file);
        expect_header(in, file, "person_id,lab_code,month,value");
        std::string line;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (csv::trim(line).empty()) {
                continue;
            }
            const auto f = csv::split(csv::trim(line));
            if (f.size() != 4 || f[0].empty() || f[1].empty()) {
                throw ParseError(file, line_no, "expected 4 fields");
            }
            const int month = csv::parse_int(f[2], file, line_no);
            if (month < 0) {
                throw ValidationError(file + ":" + std::to_string(line_no) + ": negative month " +
                                      std::to_string(month));
            }
            const double value = csv::parse_double(f[3], file, line_no);
            auto& acc = labs[std::string(f[0])][std::string(f[1])][month];
            acc.sum += value;
            ++acc.count;
        }
    }

    for (auto& [pid, by_lab] : labs) {
        auto& rec = records[pid];
        rec.person_id = pid;
        for (auto& [code, by_month] : by_lab) {
            auto& obs = rec.labs[code];
            for (const auto& [month, acc] : by_month) {
                obs.push_back({month, acc.sum / acc.count});
            }
        }
    }

    {
        const std::string file = diagnoses_file.string();
        auto in = csv::open_input(diagnoses_file);
        expect_header(in, file, "person_id,disease_code,month");
        std::string line;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (csv::trim(line).empty()) {
                continue;
            }
            const auto f = csv::split(csv::trim(line));
            if (f.size() != 3 || f[0].empty() || f[1].empty()) {
                throw ParseError(file, line_no, "expected 3 fields");
            }
            const int month = csv::parse_int(f[2], file, line_no);
            if (month < 0) {
                throw ValidationError(file + ":" + std::to_string(line_no) + ": negative month " +
                                      std::to_string(month));
            }
            auto& rec = records[std::string(f[0])];
            rec.person_id = std::string(f[0]);
            rec.diagnoses[std::string(f[1])].insert(month);
        }
    }

    std::vector<PatientRecord> out;
    out.reserve(records.size());
    for (auto& [pid, rec] : records) {
        if (horizon) {
            rec.history_months = *horizon;
        } else {
            int last = -1;
            for (const auto& [code, obs] : rec.labs) {
                if (!obs.empty()) {
                    last = std::max(last, obs.back().month);
                }
            }
            for (const auto& [code, months] : rec.diagnoses) {
                if (!months.empty()) {
                    last = std::max(last, *months.rbegin());
                }
            }
            rec.history_months = last + 1;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void write_observations(const std::filesystem::path& path,
                        std::span<const PatientRecord> patients) {
    auto out = csv::open_output(path);
    out << "person_id,lab_code,month,value\n";
    for (const auto& p : patients) {
        for (const auto& [code, obs] : p.labs) {
            for (const auto& o : obs) {
                out << p.person_id << ',' << code << ',' << o.month << ','
                    << csv::format_double(o.value) << '\n';
            }
        }
    }
}

void write_diagnoses(const std::filesystem::path& path, std::span<const PatientRecord> patients) {
    auto out = csv::open_output(path);
    out << "person_id,disease_code,month\n";
    for (const auto& p : patients) {
        for (const auto& [code, months] : p.diagnoses) {
            for (int m : months) {
                out << p.person_id << ',' << code << ',' << m << '\n';
            }
        }
    }
}

void write_normalization(const std::filesystem::path& path, const NormalizationStats& stats) {
    auto out = csv::open_output(path);
    out << "lab_code,mean,std\n";
    for (const auto& [code, s] : stats.labs) {
        out << code << ',' << csv::format_double(s.mean) << ',' << csv::format_double(s.std)
            << '\n';
    }
}

NormalizationStats read_normalization(const std::filesystem::path& path) {
    const std::string file = path.string();
    auto in = csv::open_input(path);
    expect_header(in, file, "lab_code,mean,std");
    NormalizationStats stats;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) {
            continue;
        }
        const auto f = csv::split(csv::trim(line));
        if (f.size() != 3) {
            throw ParseError(file, line_no, "expected 3 fields");
        }
        LabStats s{csv::parse_double(f[1], file, line_no), csv::parse_double(f[2], file, line_no)};
        if (!(s.std > 0.0)) {
            throw ValidationError(file + ":" + std::to_string(line_no) + ": std must be positive");
        }
        stats.labs[std::string(f[0])] = s;
    }
    return stats;
}

void write_ground_truth(const std::filesystem::path& path,
                        std::span<const PatientRecord> patients, const GroundTruth& truth) {
    auto out = csv::open_output(path);
    out << "person_id,disease_code,trigger_month\n";
    for (std::size_t i = 0; i < patients.size(); ++i) {
        for (std::size_t m = 0; m < truth.disease_codes.size(); ++m) {
            out << patients[i].person_id << ',' << truth.disease_codes[m] << ','
                << truth.trigger_month[i][m] << '\n';
        }
    }
}

}  // namespace labconv::cohort
