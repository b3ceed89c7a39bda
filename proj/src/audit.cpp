#include "hchain/audit.hpp"

#include "hchain/error.hpp"

namespace hchain {

AuditLog::AuditLog(std::filesystem::path path)
{
    out_.emplace(path, std::ios::out | std::ios::trunc);
    if (!*out_)
        throw IoError("cannot open audit log " + path.string());
}

void AuditLog::append(nlohmann::json entry)
{
    if (out_) {
        *out_ << entry.dump() << '\n';
        out_->flush();
    }
    entries_.push_back(std::move(entry));
}

} // namespace hchain
