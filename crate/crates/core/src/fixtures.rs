//! Small built-in relations used by tests, examples and the guide.

use crate::claim::{TaskConfig, TaskSpec};
use crate::dataset::{AttrKind, Dataset, Schema};

/// Ten census-style records: sex, occupation, education, quarter of birth
/// and income in thousands.
pub const TABLE1_CSV: &str = "\
ID,Sex,Occupation,EducationLevel,QoB,Income
1,F,CS&Math,Bachelor's degree,1,72
2,F,CS&Math,Master's degree,3,95
3,F,Education,Master's degree,2,43
4,F,Sales,High School Diploma,1,35
5,F,Sales,Bachelor's degree,4,100
6,M,CS&Math,Bachelor's degree,4,80
7,M,CS&Math,Master's degree,3,90
8,M,Education,Master's degree,2,62
9,M,Sales,Bachelor's degree,1,70
10,M,Sales,High School Diploma,3,65
";

pub fn table1_schema() -> Schema {
    let mut schema = Schema::new("Income", "EducationLevel", ["Sex", "Occupation", "QoB"])
        .with_kind("ID", AttrKind::NumericRaw)
        .with_kind("QoB", AttrKind::NumericRaw)
        .with_kind("Income", AttrKind::NumericRaw)
        .with_label("QoB", "Quarter Of Birth");
    schema.value_labels.insert(
        "Occupation".into(),
        [("CS&Math".to_owned(), "CS & Math".to_owned())]
            .into_iter()
            .collect(),
    );
    schema
}

pub fn table1() -> Dataset {
    Dataset::from_csv_reader(TABLE1_CSV.as_bytes(), &table1_schema())
        .expect("built-in fixture parses")
}

/// Average income, claiming Master's degree holders out-earn Bachelor's
/// degree holders, with `m = 1` and no minimum group size.
pub fn table1_task() -> TaskSpec {
    TaskSpec::average("Master's degree", "Bachelor's degree").with_config(TaskConfig {
        k: 10,
        m: 1,
        min_group: 1,
        ..TaskConfig::default()
    })
}
