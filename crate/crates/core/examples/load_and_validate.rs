//! Reading participant-level data with custom column names and time units,
//! then checking the evidence network before any model is fitted.
//!
//! cargo run --example load_and_validate

use tvhr_synthesis::data::{arm_ordering, parse_ipd, validate_network, ColumnNames, DataConfig, EvidenceNetwork, TimeUnit};

const IPD: &str = "\
trial;arm;months;died
A1;placebo;3;1
A1;placebo;14;0
A1;drug;9;1
A1;drug;20;0
B7;placebo;6;1
B7;drug;11;1
B7;combo;15;0
B7;combo;4;1
C2;combo;8;1
C2;other;10;0
";

fn main() -> tvhr_synthesis::Result<()> {
    let config = DataConfig {
        time_unit: TimeUnit::Months,
        reference: Some("placebo".into()),
        columns: ColumnNames {
            study: "trial".into(),
            treatment: "arm".into(),
            time: "months".into(),
            event: "died".into(),
        },
        delimiter: ';',
        has_header: Some(true),
    };
    let records = parse_ipd(IPD, &config)?;
    println!("{} records, first follow-up {:.3} years", records.len(), records[0].time);

    let net = EvidenceNetwork::from_records(&records, config.reference.as_deref())?;
    println!("treatments: {}", net.treatments.join(", "));
    println!("multi-arm studies: {:?}", net.multi_arm_studies());
    for study in &net.studies {
        // reference first, then the other arms in global treatment order
        let events = study.arm_events();
        let arms: Vec<String> = arm_ordering(&net, &study.id)?
            .into_iter()
            .map(|a| format!("{} ({} events)", a.label, events[a.position]))
            .collect();
        println!("  {:<3} {}", study.id, arms.join(", "));
    }

    // "other" in C2 has no events, so its contrast cannot be estimated
    let findings = validate_network(&net);
    if findings.is_empty() {
        println!("network is valid");
    }
    for f in &findings {
        println!("{f}");
    }

    // a network with no link between its halves is refused outright
    let split: Vec<_> = records.into_iter().filter(|r| r.study != "B7").collect();
    match EvidenceNetwork::from_records(&split, Some("placebo")) {
        Ok(_) => println!("unexpectedly connected"),
        Err(e) => println!("without B7: {e}"),
    }
    Ok(())
}
