#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fibretrap {

class TableError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/*!
 * Column table emitted by every scan.
 *
 * Columns carry a role so readers can tell the scanned variable from
 * measured values and their one-sigma errors. Metadata is an ordered list of
 * key/value strings written as a `#` block ahead of the CSV header.
 */
struct ScanTable
{
    enum class Role
    {
        independent,
        dependent,
        error,
    };

    struct Column
    {
        std::string name;
        Role role = Role::dependent;
        std::vector<double> values;
    };

    std::vector<Column> columns;
    std::vector<std::pair<std::string, std::string>> metadata;

    Column& add(std::string name, Role role, std::vector<double> values = {});
    Column const& column(std::string const& name) const;
    Column& column(std::string const& name);
    bool has(std::string const& name) const;
    std::size_t rows() const;
    void set_meta(std::string const& key, std::string value);
    std::string const& meta(std::string const& key) const;

    // Equal column lengths, non-negative finite errors.
    void validate() const;

    void write_csv(std::ostream& os) const;
    static ScanTable read_csv(std::istream& is);
};

char const* to_string(ScanTable::Role role);

}  // namespace fibretrap
