// Context selectors and the searchable activity catalog. These mirror the
// default taxonomy shipped with the service; the feedback endpoint validates
// the selection again server-side, so a stale list fails loud, not silent.

export const TIME_CLASSES = [
  "early_morning",
  "morning",
  "mid_morning",
  "late_morning",
  "midday",
  "early_afternoon",
  "afternoon",
  "mid_afternoon",
  "late_afternoon",
  "early_evening",
  "evening",
  "late_evening",
  "early_night",
  "night",
  "late_night",
  "dawn",
  "any_time",
];

export const DAY_CLASSES = [
  "workday",
  "weekday",
  "early_week",
  "mid_week",
  "late_week",
  "friday",
  "saturday",
  "sunday",
  "holiday",
  "day",
];

export const ACTIVITY_CATALOG = [
  "buying_medicine",
  "clothes_shopping",
  "drinking_at_bar",
  "eating",
  "education_activity",
  "entertainment_activity",
  "gambling",
  "grocery_shopping",
  "having_breakfast",
  "having_dinner",
  "having_lunch",
  "having_snack",
  "health_medicine_activity",
  "hiking",
  "industrial_work",
  "office_work",
  "outdoor_activity",
  "playing_football",
  "relaxing_at_home",
  "residential_activity",
  "shopping",
  "sightseeing",
  "skiing",
  "sleeping",
  "sporting_activity",
  "studying",
  "swimming",
  "teaching",
  "transportation_traveling",
  "travel_by_airplane",
  "travel_by_transport",
  "traveling_by_bus",
  "traveling_by_car",
  "traveling_by_train",
  "visiting_doctor",
  "visiting_religious_place",
  "watching_movie",
  "working_activity",
];

export function searchCatalog(query: string): string[] {
  const q = query.trim().toLowerCase();
  if (!q) return ACTIVITY_CATALOG;
  return ACTIVITY_CATALOG.filter((a) => a.includes(q) || a.replace(/_/g, " ").includes(q));
}
