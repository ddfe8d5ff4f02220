use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::trade::Axes;

/// Yearly country x product export values in USD.
///
/// Years are contiguous; country and product code lists are sorted and
/// duplicate-free. Missing (year, country, product) combinations are
/// stored as zero so that RCA marginals are always well defined.
#[derive(Debug, Clone)]
pub struct ExportPanel {
    years: Vec<i32>,
    axes: Arc<Axes>,
    /// One grid per year, aligned with `years`.
    values: Vec<Grid<f64>>,
}

/// Column mapping for [`load_export_csv`]. Defaults to the canonical
/// `year,country,product,value` header.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub year: String,
    pub country: String,
    pub product: String,
    pub value: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            year: "year".into(),
            country: "country".into(),
            product: "product".into(),
            value: "value".into(),
        }
    }
}

impl ExportPanel {
    /// Validates and assembles a panel from explicit axes and per-year
    /// value grids.
    pub fn new(
        years: Vec<i32>,
        countries: Vec<String>,
        products: Vec<String>,
        values: Vec<Grid<f64>>,
    ) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::validation("panel needs at least one year"));
        }
        for w in years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::validation(format!("year gap at {}", w[0] + 1)));
            }
        }
        check_unique(&countries, "country")?;
        check_unique(&products, "product")?;
        if values.len() != years.len() {
            return Err(Error::validation(format!(
                "expected {} value grids, got {}",
                years.len(),
                values.len()
            )));
        }
        for (year, grid) in years.iter().zip(&values) {
            if grid.rows() != countries.len() || grid.cols() != products.len() {
                return Err(Error::validation(format!(
                    "grid for year {year} is {}x{}, expected {}x{}",
                    grid.rows(),
                    grid.cols(),
                    countries.len(),
                    products.len()
                )));
            }
            for &v in grid.values() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::validation(format!(
                        "non-finite or negative export value {v} in year {year}"
                    )));
                }
            }
        }
        Ok(ExportPanel {
            years,
            axes: Arc::new(Axes {
                countries,
                products,
            }),
            values,
        })
    }

    /// Builds a panel from raw `(year, country, product, value)` records.
    /// Duplicate keys are summed; unobserved combinations become zero.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i32, String, String, f64)>,
    {
        let mut years = BTreeSet::new();
        let mut countries = BTreeSet::new();
        let mut products = BTreeSet::new();
        let mut cells: BTreeMap<(i32, String, String), f64> = BTreeMap::new();
        for (year, country, product, value) in records {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::validation(format!(
                    "non-finite or negative export value {value} for ({year},{country},{product})"
                )));
            }
            years.insert(year);
            countries.insert(country.clone());
            products.insert(product.clone());
            *cells.entry((year, country, product)).or_insert(0.0) += value;
        }
        if years.is_empty() {
            return Err(Error::validation("no records"));
        }
        let years: Vec<i32> = years.into_iter().collect();
        for w in years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::validation(format!("year gap at {}", w[0] + 1)));
            }
        }
        let countries: Vec<String> = countries.into_iter().collect();
        let products: Vec<String> = products.into_iter().collect();
        let country_idx: BTreeMap<&str, usize> = countries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let product_idx: BTreeMap<&str, usize> = products
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let y0 = years[0];
        let mut values =
            vec![Grid::filled(countries.len(), products.len(), 0.0); years.len()];
        for ((year, country, product), v) in cells {
            let g = &mut values[(year - y0) as usize];
            g.set(country_idx[country.as_str()], product_idx[product.as_str()], v);
        }
        ExportPanel::new(years, countries, products, values)
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn first_year(&self) -> i32 {
        self.years[0]
    }

    pub fn last_year(&self) -> i32 {
        *self.years.last().unwrap()
    }

    pub fn axes(&self) -> &Arc<Axes> {
        &self.axes
    }

    pub fn countries(&self) -> &[String] {
        &self.axes.countries
    }

    pub fn products(&self) -> &[String] {
        &self.axes.products
    }

    pub fn year_index(&self, year: i32) -> Result<usize> {
        if year < self.years[0] || year > *self.years.last().unwrap() {
            return Err(Error::lookup(format!(
                "year {year} not in panel range {}..={}",
                self.years[0],
                self.years.last().unwrap()
            )));
        }
        Ok((year - self.years[0]) as usize)
    }

    /// Raw value grid for one year.
    pub fn year_values(&self, year: i32) -> Result<&Grid<f64>> {
        Ok(&self.values[self.year_index(year)?])
    }

    pub fn value(&self, year: i32, country: &str, product: &str) -> Result<f64> {
        let y = self.year_index(year)?;
        let c = self
            .axes
            .country_index(country)
            .ok_or_else(|| Error::lookup(format!("unknown country {country}")))?;
        let p = self
            .axes
            .product_index(product)
            .ok_or_else(|| Error::lookup(format!("unknown product {product}")))?;
        Ok(self.values[y].at(c, p))
    }

    /// Groups products by code prefix of length `digits` and sums values
    /// within each group. The output product list is the sorted set of
    /// distinct prefixes.
    pub fn aggregate_products(&self, digits: usize) -> Result<ExportPanel> {
        if digits == 0 {
            return Err(Error::validation("digits must be at least 1"));
        }
        let mut prefixes = BTreeSet::new();
        for code in &self.axes.products {
            if code.chars().count() < digits {
                return Err(Error::validation(format!(
                    "product code {code} is shorter than {digits} digits"
                )));
            }
            let cut = code
                .char_indices()
                .nth(digits)
                .map(|(i, _)| i)
                .unwrap_or(code.len());
            prefixes.insert(code[..cut].to_string());
        }
        let prefixes: Vec<String> = prefixes.into_iter().collect();
        let group_of: Vec<usize> = self
            .axes
            .products
            .iter()
            .map(|code| {
                let cut = code
                    .char_indices()
                    .nth(digits)
                    .map(|(i, _)| i)
                    .unwrap_or(code.len());
                prefixes.binary_search(&code[..cut].to_string()).unwrap()
            })
            .collect();
        let n_c = self.axes.n_countries();
        let values = self
            .values
            .iter()
            .map(|grid| {
                let mut out = Grid::filled(n_c, prefixes.len(), 0.0);
                for c in 0..n_c {
                    for (p, &g) in group_of.iter().enumerate() {
                        *out.get_mut(c, g) += grid.at(c, p);
                    }
                }
                out
            })
            .collect();
        ExportPanel::new(
            self.years.clone(),
            self.axes.countries.clone(),
            prefixes,
            values,
        )
    }

    /// Serializes the panel back to the canonical CSV layout, skipping
    /// zero cells.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("year,country,product,value\n");
        for (yi, year) in self.years.iter().enumerate() {
            let grid = &self.values[yi];
            for (c, country) in self.axes.countries.iter().enumerate() {
                for (p, product) in self.axes.products.iter().enumerate() {
                    let v = grid.at(c, p);
                    if v != 0.0 {
                        out.push_str(&format!("{year},{country},{product},{v}\n"));
                    }
                }
            }
        }
        out
    }
}

fn check_unique(codes: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for code in codes {
        if !seen.insert(code) {
            return Err(Error::validation(format!("duplicate {what} code {code}")));
        }
    }
    Ok(())
}

/// Reads a `(year, country, product, value)` CSV file into a panel.
///
/// The header must contain the columns named by `schema`; extra columns
/// are ignored. Malformed fields report their 1-based line number.
pub fn load_export_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ExportPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing column {name}"),
            })
    };
    let year_col = col(&schema.year)?;
    let country_col = col(&schema.country)?;
    let product_col = col(&schema.product)?;
    let value_col = col(&schema.value)?;

    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or_default(),
            msg: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                msg: "row has too few fields".into(),
            })
        };
        let year: i32 = field(year_col)?.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid year {:?}", field(year_col).unwrap_or("")),
        })?;
        let value: f64 = field(value_col)?
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                line,
                msg: format!("invalid value {:?}", field(value_col).unwrap_or("")),
            })?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::validation(format!(
                "negative or non-finite value {value} at line {line}"
            )));
        }
        records.push((
            year,
            field(country_col)?.to_string(),
            field(product_col)?.to_string(),
            value,
        ));
    }
    ExportPanel::from_records(records)
}
