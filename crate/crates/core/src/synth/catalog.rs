//! Fixed vocabularies the generator draws planted facts from.

pub struct ImagingItem {
    pub description: &'static str,
    pub phrases: &'static [&'static str],
    pub findings: &'static [&'static str],
}

pub const IMAGING: &[ImagingItem] = &[
    ImagingItem {
        description: "X-RAY CHEST 2 VIEWS",
        phrases: &["Two-view chest x-ray", "Chest X-ray (PA and lateral)"],
        findings: &["no focal consolidation", "small bilateral effusions", "stable cardiomediastinal silhouette"],
    },
    ImagingItem {
        description: "XR CHEST PORTABLE 1 VIEW",
        phrases: &["Portable chest x-ray", "Single view portable CXR x-ray"],
        findings: &["endotracheal tube in good position", "increased right basilar opacity", "no pneumothorax"],
    },
    ImagingItem {
        description: "CT HEAD W/O CONTRAST",
        phrases: &["Non-contrast CT of the head", "CT head without contrast"],
        findings: &["no acute intracranial hemorrhage", "chronic small vessel changes"],
    },
    ImagingItem {
        description: "CT CHEST ABDOMEN PELVIS WITH IV CONTRAST",
        phrases: &["CT chest, abdomen and pelvis with contrast", "Contrast CT of chest/abdomen/pelvis"],
        findings: &["no abscess", "mild colitis", "small left lower lobe consolidation"],
    },
    ImagingItem {
        description: "CT LUMBAR SPINE W/O IV CONTRAST",
        phrases: &["CT of the lumbar spine without contrast", "Lumbar spine CT"],
        findings: &["no acute fracture", "degenerative disc disease"],
    },
    ImagingItem {
        description: "CTA CHEST",
        phrases: &["CT angiogram of the chest", "CTA chest (CT pulmonary angiography)"],
        findings: &["no pulmonary embolism", "no aortic dissection"],
    },
    ImagingItem {
        description: "MRI BRAIN W/ AND W/O CONTRAST",
        phrases: &["MRI of the brain with and without contrast", "Brain MRI"],
        findings: &["no acute infarct", "no enhancing lesion"],
    },
    ImagingItem {
        description: "MRI LUMBAR SPINE W/O CONTRAST",
        phrases: &["MRI lumbar spine without contrast", "Lumbar MRI"],
        findings: &["no epidural abscess", "mild foraminal narrowing"],
    },
    ImagingItem {
        description: "US RENAL",
        phrases: &["Renal ultrasound", "Ultrasound of the kidneys"],
        findings: &["no hydronephrosis", "echogenic kidneys"],
    },
    ImagingItem {
        description: "US ABDOMEN LIMITED",
        phrases: &["Limited abdominal ultrasound", "Right upper quadrant ultrasound"],
        findings: &["no gallbladder wall thickening", "mild hepatomegaly"],
    },
    ImagingItem {
        description: "US DUPLEX LOWER EXTREMITY VEINS BILATERAL",
        phrases: &["Bilateral lower extremity venous duplex ultrasound", "Lower extremity DVT ultrasound"],
        findings: &["no deep venous thrombosis", "superficial thrombophlebitis only"],
    },
    ImagingItem {
        description: "ECHO TRANSTHORACIC COMPLETE",
        phrases: &["Transthoracic echocardiogram", "TTE echocardiogram"],
        findings: &["ejection fraction 35 percent", "no valvular vegetation", "normal biventricular function"],
    },
    ImagingItem {
        description: "NM BONE SCAN WHOLE BODY",
        phrases: &["Whole body NM bone scan (nuclear medicine imaging)", "Nuclear medicine NM bone scan"],
        findings: &["no osteomyelitis pattern", "degenerative uptake in knees"],
    },
    ImagingItem {
        description: "XR ANKLE LEFT 3+ VIEWS",
        phrases: &["Left ankle x-ray", "X-ray of the left ankle (3 views)"],
        findings: &["no fracture", "soft tissue swelling"],
    },
    ImagingItem {
        description: "XR ABDOMEN 1 VIEW",
        phrases: &["Abdominal x-ray (KUB)", "Single view abdominal X-ray"],
        findings: &["nonobstructive bowel gas pattern", "feeding tube tip in stomach"],
    },
];

pub struct DrugItem {
    /// Names as written in notes and consults; all resolve to the same ingredients.
    pub names: &'static [&'static str],
    pub ingredients: &'static [&'static str],
}

pub const THERAPEUTIC: &[DrugItem] = &[
    DrugItem { names: &["Vancomycin", "IV vanc"], ingredients: &["vancomycin"] },
    DrugItem { names: &["Ceftriaxone", "Rocephin"], ingredients: &["ceftriaxone"] },
    DrugItem { names: &["Zosyn", "Piperacillin-tazobactam", "pip-tazo"], ingredients: &["piperacillin", "tazobactam"] },
    DrugItem { names: &["Cefepime"], ingredients: &["cefepime"] },
    DrugItem { names: &["Meropenem"], ingredients: &["meropenem"] },
    DrugItem { names: &["Metronidazole", "Flagyl"], ingredients: &["metronidazole"] },
    DrugItem { names: &["Azithromycin"], ingredients: &["azithromycin"] },
    DrugItem { names: &["Levofloxacin"], ingredients: &["levofloxacin"] },
    DrugItem { names: &["Linezolid", "Zyvox"], ingredients: &["linezolid"] },
    DrugItem { names: &["Daptomycin"], ingredients: &["daptomycin"] },
    DrugItem { names: &["Unasyn", "Ampicillin-sulbactam"], ingredients: &["ampicillin", "sulbactam"] },
    DrugItem { names: &["Doxycycline"], ingredients: &["doxycycline"] },
    DrugItem { names: &["Augmentin", "Amoxicillin-clavulanate"], ingredients: &["amoxicillin", "clavulanate"] },
];

pub struct DecoyItem {
    pub drug: DrugItem,
    pub purpose: &'static str,
}

pub const PROPHYLACTIC: &[DecoyItem] = &[
    DecoyItem { drug: DrugItem { names: &["Cefazolin", "Ancef"], ingredients: &["cefazolin"] }, purpose: "periprocedural prophylaxis" },
    DecoyItem { drug: DrugItem { names: &["Bactrim", "Trimethoprim-sulfamethoxazole"], ingredients: &["sulfamethoxazole", "trimethoprim"] }, purpose: "PJP prophylaxis" },
    DecoyItem { drug: DrugItem { names: &["Fluconazole"], ingredients: &["fluconazole"] }, purpose: "antifungal prophylaxis" },
];

pub const INDICATIONS: &[&str] = &[
    "suspected pneumonia",
    "bacteremia",
    "possible intra-abdominal infection",
    "cellulitis",
    "urinary source",
    "empiric sepsis coverage",
];

pub struct DiagnosisItem {
    pub code: &'static str,
    pub description: &'static str,
    pub surface: &'static str,
    /// Items sharing a group are never planted together.
    pub group: &'static str,
    pub plan: &'static str,
}

pub const FOCUS: &[DiagnosisItem] = &[
    DiagnosisItem { code: "R65.21", description: "Severe sepsis with septic shock", surface: "Septic shock", group: "INF002", plan: "on norepinephrine, cultures pending" },
    DiagnosisItem { code: "N17.9", description: "Acute kidney failure, unspecified", surface: "Acute kidney injury", group: "GEN002", plan: "creatinine trending, renally dosing medications" },
    DiagnosisItem { code: "J96.01", description: "Acute respiratory failure with hypoxia", surface: "Acute hypoxic respiratory failure", group: "RSP012", plan: "on high flow nasal cannula" },
    DiagnosisItem { code: "J18.9", description: "Pneumonia, unspecified organism", surface: "Pneumonia", group: "RSP002", plan: "sputum culture sent" },
    DiagnosisItem { code: "I21.4", description: "Non-ST elevation (NSTEMI) myocardial infarction", surface: "NSTEMI", group: "CIR009", plan: "troponin peaked, on heparin drip" },
    DiagnosisItem { code: "I48.91", description: "Unspecified atrial fibrillation", surface: "Atrial fibrillation", group: "CIR017", plan: "rate controlled with metoprolol" },
    DiagnosisItem { code: "E87.1", description: "Hypo-osmolality and hyponatremia", surface: "Hyponatremia", group: "END011", plan: "sodium checks every six hours" },
    DiagnosisItem { code: "K92.2", description: "Gastrointestinal hemorrhage, unspecified", surface: "Gastrointestinal hemorrhage", group: "DIG021", plan: "transfused, GI following" },
    DiagnosisItem { code: "I50.23", description: "Acute on chronic systolic (congestive) heart failure", surface: "Acute on chronic systolic heart failure", group: "CIR019", plan: "diuresing with IV furosemide" },
    DiagnosisItem { code: "J44.1", description: "Chronic obstructive pulmonary disease with (acute) exacerbation", surface: "COPD exacerbation", group: "RSP008", plan: "on steroids and nebulizers" },
    DiagnosisItem { code: "E11.65", description: "Type 2 diabetes mellitus with hyperglycemia", surface: "Type 2 diabetes with hyperglycemia", group: "END003", plan: "insulin drip transitioned to basal bolus" },
    DiagnosisItem { code: "G93.41", description: "Metabolic encephalopathy", surface: "Metabolic encephalopathy", group: "NVS011", plan: "delirium precautions, correcting metabolic derangements" },
    DiagnosisItem { code: "N39.0", description: "Urinary tract infection, site not specified", surface: "Urinary tract infection", group: "GEN004", plan: "urine culture pending" },
    DiagnosisItem { code: "D64.9", description: "Anemia, unspecified", surface: "Anemia", group: "BLD003", plan: "hemoglobin monitored daily" },
    DiagnosisItem { code: "I95.9", description: "Hypotension, unspecified", surface: "Hypotension", group: "CIR029", plan: "fluid bolus given" },
];

pub const HISTORY: &[DiagnosisItem] = &[
    DiagnosisItem { code: "I10", description: "Essential (primary) hypertension", surface: "Hypertension", group: "CIR007", plan: "home amlodipine held" },
    DiagnosisItem { code: "E78.5", description: "Hyperlipidemia, unspecified", surface: "Hyperlipidemia", group: "END010", plan: "continue statin" },
    DiagnosisItem { code: "K21.9", description: "Gastro-esophageal reflux disease without esophagitis", surface: "GERD", group: "DIG004", plan: "continue pantoprazole" },
    DiagnosisItem { code: "Z87.891", description: "Personal history of nicotine dependence", surface: "History of smoking", group: "FAC021", plan: "quit ten years ago" },
    DiagnosisItem { code: "Z79.4", description: "Long term (current) use of insulin", surface: "Long-term insulin use", group: "FAC025", plan: "home regimen noted" },
    DiagnosisItem { code: "N18.3", description: "Chronic kidney disease, stage 3 (moderate)", surface: "CKD stage 3", group: "GEN003", plan: "baseline creatinine 1.6" },
    DiagnosisItem { code: "E11.9", description: "Type 2 diabetes mellitus without complications", surface: "Type 2 diabetes", group: "END002", plan: "diet controlled" },
];

pub const CONSULT_SERVICES: &[&str] = &["Cardiology", "Nephrology", "General Surgery", "Pulmonology"];

pub const NON_ANTI_INFECTIVE: &[(&str, &str)] = &[
    ("heparin", "Anticoagulant"),
    ("insulin lispro", "Endocrine"),
    ("pantoprazole", "Gastrointestinal"),
    ("acetaminophen", "Analgesic"),
];
