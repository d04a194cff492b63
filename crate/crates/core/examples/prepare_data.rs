//! Raw files to model-ready tables: write synthetic half-hourly demand and
//! hourly station temperatures as CSV, load them back through the ingest
//! layer, and build the daily-peak and half-hourly tables.
//!
//! ```text
//! cargo run --release --example prepare_data -- [output dir]
//! ```

use peakcast::features::{write_daily_csv, write_highres_csv};
use peakcast::ingest::{load_demand_csv, load_station_csv, CsvSchema, LoadOptions, PreparedData, TEMP_SMOOTHING};
use peakcast::synthetic::{SyntheticConfig, SyntheticData};

fn main() -> peakcast::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "prepare_data_out".into());
    let synthetic = SyntheticData::generate(&SyntheticConfig {
        days: 400,
        ..Default::default()
    })?;
    let (demand_path, station_paths) = synthetic.write_raw(format!("{out}/raw"))?;

    let load = load_demand_csv(&demand_path, &LoadOptions::default())?;
    let weather = LoadOptions {
        schema: CsvSchema::weather(),
        ..Default::default()
    };
    let stations = synthetic
        .stations
        .iter()
        .zip(&station_paths)
        .map(|(s, path)| load_station_csv(path, &s.station_id, s.population_weight, &weather))
        .collect::<peakcast::Result<Vec<_>>>()?;
    println!("demand: {} days from {}", load.n_days(), load.start_date);
    for s in &stations {
        println!("station {:<10} weight {:.2}  {} hourly readings", s.station_id, s.population_weight, s.values.len());
    }

    let prepared = PreparedData::from_sources(load, &stations, TEMP_SMOOTHING)?;
    let table = prepared.daily_table()?;
    let highres = prepared.highres_rows()?;
    println!(
        "{} daily rows, {} half-hourly rows; clock-change days excluded: {:?}",
        table.len(),
        highres.len(),
        prepared.load.flagged_days
    );
    let first = &table.rows[0];
    println!(
        "{}: peak {:.0} MW at slot {} (yesterday {:.0} MW at slot {}), max smoothed temperature {:.1} C",
        first.date, first.dp, first.ip, first.dp24, first.ip24, first.temp95_max
    );

    prepared.write_csv(format!("{out}/prepared.csv"))?;
    write_daily_csv(&table, format!("{out}/daily.csv"))?;
    write_highres_csv(&highres, format!("{out}/highres.csv"))?;
    println!("tables written to {out}/");
    Ok(())
}
