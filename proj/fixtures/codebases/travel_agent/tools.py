"""External search tools."""

# @tool search_flights
def search_flights(session):
    return flights_api.search(**session["trip"])

# @tool search_hotels
# @handler hotel_fallback
# @edge search_hotels -> hotel_fallback : on timeout retry once
def search_hotels(session):
    try:
        return hotels_api.search(**session["trip"])
    except TimeoutError:
        return hotel_fallback(session)

def hotel_fallback(session):
    return hotels_api.search(**session["trip"], cached=True)
