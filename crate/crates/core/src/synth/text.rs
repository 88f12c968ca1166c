//! Neutral filler sentences. None mention a planted fact, a modality, or
//! an anti-infective.

pub const FILLER: &[&str] = &[
    "Patient seen and examined at bedside.",
    "Vital signs reviewed and notable as documented in flowsheets.",
    "Overnight events discussed with nursing staff.",
    "No acute events were reported by the night team.",
    "Patient slept intermittently and reports mild fatigue.",
    "Pain is controlled on the current regimen.",
    "Tolerating diet without nausea.",
    "Intake and output reviewed; net balance is slightly positive.",
    "Skin is warm and dry without new breakdown.",
    "Lungs with scattered coarse sounds bilaterally.",
    "Heart sounds regular with no new murmur appreciated.",
    "Abdomen soft, nontender, and nondistended.",
    "Extremities without edema today.",
    "Neurologic exam is nonfocal and unchanged from yesterday.",
    "Family updated at the bedside and questions were answered.",
    "Physical therapy evaluated and recommends continued mobilization.",
    "Case management is following along regarding disposition.",
    "Labs reviewed and electrolytes repleted per protocol.",
    "Blood glucose values have been within goal range.",
    "Central line site is clean and dressing is intact.",
    "Foley catheter remains in place with clear output.",
    "Continue deep vein thrombosis prophylaxis with subcutaneous heparin.",
    "Continue home medications except as noted.",
    "Diet advanced as tolerated.",
    "Code status confirmed as full code.",
    "Plan reviewed with the attending physician.",
    "Nursing reports the patient ambulated twice in the hallway.",
    "Respiratory therapy continues incentive spirometry teaching.",
    "Nutrition consulted and recommends protein supplements.",
    "Social work met with the patient and family.",
    "Medication reconciliation completed.",
    "Telemetry without significant arrhythmia overnight.",
    "Oxygen requirement is stable on current settings.",
    "Patient expresses understanding of the plan.",
    "Bowel regimen continued.",
    "Wound care per nursing protocol.",
    "Will continue to monitor closely.",
    "Discussed goals of care; patient wishes to continue current management.",
    "Morning labs pending at time of writing.",
    "Pharmacy reviewed medication doses.",
    "Hand hygiene and isolation precautions maintained.",
    "Patient was repositioned every two hours.",
    "Chaplain visited at patient request.",
    "Appetite is improving per patient report.",
    "Mental status at baseline per family.",
];

pub const IMAGING_DISTRACTORS: &[&str] = &[
    "Outside records mention a remote knee MRI from several years ago.",
    "Will consider repeat CT if abdominal pain recurs.",
    "Prior x-ray reports from an outside facility were requested.",
    "No further ultrasound is planned at this time.",
];

pub const ANTIBIOTIC_DISTRACTORS: &[&str] = &[
    "Allergy list includes penicillin with remote rash.",
    "Antibiotic stewardship team is following.",
    "Patient asked about the antibiotics plan; questions answered.",
];

pub const DX_DISTRACTORS: &[&str] = &[
    "Family history notable for coronary disease in father.",
    "Remote appendectomy in childhood.",
    "Denies tobacco use in the past decade.",
];
