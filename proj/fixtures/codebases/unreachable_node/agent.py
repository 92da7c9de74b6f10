"""Flight assistant with a dead upsell state."""

# @entry greet
def greet(session):
    return "Where would you like to fly?"

# @edge greet -> collect_dates : user names a destination
# @state collect_dates
def collect_dates(session, message):
    session["dates"] = parse_dates(message)
    return "Searching flights..."

# @tool search_flights
# @edge collect_dates -> search_flights : dates known
def search_flights(session):
    try:
        return flights_api.search(session["destination"], session["dates"])
    except flights_api.Error:
        return flight_error(session)

# @handler flight_error
# @edge search_flights -> flight_error : on error
def flight_error(session):
    return "The flight search is unavailable right now."

# @state confirm_booking
# @edge search_flights -> confirm_booking : results found
def confirm_booking(session, choice):
    return f"Booked {choice}."

# @state legacy_upsell
# @edge legacy_upsell -> confirm_booking : upsell accepted
def legacy_upsell(session):
    # No caller left since the menu rewrite.
    return "Would you like travel insurance?"
